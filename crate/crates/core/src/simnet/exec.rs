//! Single-threaded executor driven by a virtual clock.
//!
//! Ready tasks run in wake order. When none are ready the clock jumps to the
//! earliest pending timer; timers at equal instants fire in scheduling order.
//! Given the same seed and the same spawned futures, the interleaving is
//! identical across runs.

use std::cell::{Cell, RefCell};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::{Rc, Weak};
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll, Wake, Waker};

use futures::future::LocalBoxFuture;
use futures::FutureExt;
use thiserror::Error;

use crate::net::Clock;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("simulation stalled at t={0} ms with the main task still pending")]
    Stalled(u64),
    #[error("simulation passed its time limit at t={0} ms")]
    TimeLimit(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

enum TimerAction {
    Wake(Rc<SleepSlot>),
    Run(Box<dyn FnOnce()>),
}

#[derive(Default)]
struct SleepSlot {
    waker: RefCell<Option<Waker>>,
    cancelled: Cell<bool>,
}

struct TaskWaker {
    id: usize,
    queue: Arc<Mutex<VecDeque<usize>>>,
}

impl Wake for TaskWaker {
    fn wake(self: Arc<Self>) {
        self.wake_by_ref();
    }

    fn wake_by_ref(self: &Arc<Self>) {
        self.queue.lock().expect("ready queue poisoned").push_back(self.id);
    }
}

struct SettleSlot {
    waker: RefCell<Option<Waker>>,
    fired: Cell<bool>,
}

pub(crate) struct Core {
    now: Cell<u64>,
    seq: Cell<u64>,
    timers: RefCell<BinaryHeap<Reverse<(u64, u64)>>>,
    actions: RefCell<HashMap<u64, TimerAction>>,
    tasks: RefCell<Vec<Option<LocalBoxFuture<'static, ()>>>>,
    ready: Arc<Mutex<VecDeque<usize>>>,
    settle: RefCell<Vec<Rc<SettleSlot>>>,
}

impl Core {
    fn next_seq(&self) -> u64 {
        let s = self.seq.get();
        self.seq.set(s + 1);
        s
    }

    fn schedule(&self, at: u64, action: TimerAction) {
        let seq = self.next_seq();
        let at = at.max(self.now.get());
        self.timers.borrow_mut().push(Reverse((at, seq)));
        self.actions.borrow_mut().insert(seq, action);
    }

    fn next_timer_at(&self) -> Option<u64> {
        self.timers.borrow().peek().map(|Reverse((t, _))| *t)
    }
}

/// Handle to the simulation executor. Cheap to clone.
#[derive(Clone)]
pub struct Sim {
    core: Rc<Core>,
}

impl Sim {
    /// Creates an executor whose clock starts at `start_ms` (unix ms).
    pub fn new(start_ms: u64) -> Self {
        Sim {
            core: Rc::new(Core {
                now: Cell::new(start_ms),
                seq: Cell::new(0),
                timers: RefCell::new(BinaryHeap::new()),
                actions: RefCell::new(HashMap::new()),
                tasks: RefCell::new(Vec::new()),
                ready: Arc::new(Mutex::new(VecDeque::new())),
                settle: RefCell::new(Vec::new()),
            }),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.core.now.get()
    }

    pub fn clock(&self) -> Rc<dyn Clock> {
        Rc::new(SimClock {
            core: Rc::downgrade(&self.core),
        })
    }

    /// Runs `action` at virtual time `at_ms` (or now, if that is in the past).
    pub fn schedule_at(&self, at_ms: u64, action: impl FnOnce() + 'static) {
        self.core.schedule(at_ms, TimerAction::Run(Box::new(action)));
    }

    pub fn spawn<F>(&self, fut: F) -> JoinHandle<F::Output>
    where
        F: Future + 'static,
        F::Output: 'static,
    {
        let state = Rc::new(JoinState {
            result: RefCell::new(None),
            waker: RefCell::new(None),
            finished: Cell::new(false),
        });
        let out = state.clone();
        let task = async move {
            let value = fut.await;
            *out.result.borrow_mut() = Some(value);
            out.finished.set(true);
            if let Some(w) = out.waker.borrow_mut().take() {
                w.wake();
            }
        }
        .boxed_local();
        let id = {
            let mut tasks = self.core.tasks.borrow_mut();
            tasks.push(Some(task));
            tasks.len() - 1
        };
        self.core.ready.lock().expect("ready queue poisoned").push_back(id);
        JoinHandle {
            state,
            core: Rc::downgrade(&self.core),
            id,
        }
    }

    fn poll_task(&self, id: usize) {
        let fut = self.core.tasks.borrow_mut().get_mut(id).and_then(Option::take);
        let Some(mut fut) = fut else { return };
        let waker = Waker::from(Arc::new(TaskWaker {
            id,
            queue: self.core.ready.clone(),
        }));
        let mut cx = Context::from_waker(&waker);
        if fut.as_mut().poll(&mut cx).is_pending() {
            self.core.tasks.borrow_mut()[id] = Some(fut);
        }
    }

    /// Processes one unit of work. Returns false when nothing is left.
    fn step(&self, limit_ms: u64) -> bool {
        let next = self.core.ready.lock().expect("ready queue poisoned").pop_front();
        if let Some(id) = next {
            self.poll_task(id);
            return true;
        }
        let now = self.core.now.get();
        let next_at = self.core.next_timer_at();
        if next_at.is_none_or(|t| t > now) && !self.core.settle.borrow().is_empty() {
            for slot in self.core.settle.borrow_mut().drain(..) {
                slot.fired.set(true);
                if let Some(w) = slot.waker.borrow_mut().take() {
                    w.wake();
                }
            }
            return true;
        }
        let Some(at) = next_at else { return false };
        if at > limit_ms {
            return false;
        }
        let Reverse((at, seq)) = self.core.timers.borrow_mut().pop().expect("peeked");
        let action = self.core.actions.borrow_mut().remove(&seq);
        match action {
            Some(TimerAction::Wake(slot)) => {
                if slot.cancelled.get() {
                    return true;
                }
                self.core.now.set(at.max(now));
                if let Some(w) = slot.waker.borrow_mut().take() {
                    w.wake();
                }
            }
            Some(TimerAction::Run(f)) => {
                self.core.now.set(at.max(now));
                f();
            }
            None => {}
        }
        true
    }

    /// Runs until the future completes. Fails if the simulation runs out of
    /// events first or the clock passes `limit_ms`.
    pub fn block_on_until<F>(&self, fut: F, limit_ms: u64) -> Result<F::Output, SimError>
    where
        F: Future + 'static,
        F::Output: 'static,
    {
        let handle = self.spawn(fut);
        loop {
            if handle.state.finished.get() {
                return Ok(handle.state.result.borrow_mut().take().expect("result stored"));
            }
            if !self.step(limit_ms) {
                let now = self.now_ms();
                return Err(if self.core.next_timer_at().is_some() {
                    SimError::TimeLimit(now)
                } else {
                    SimError::Stalled(now)
                });
            }
        }
    }

    pub fn block_on<F>(&self, fut: F) -> Result<F::Output, SimError>
    where
        F: Future + 'static,
        F::Output: 'static,
    {
        self.block_on_until(fut, u64::MAX)
    }

    /// Processes every event up to and including `t_ms`, then sets the clock
    /// to `t_ms`.
    pub fn run_until(&self, t_ms: u64) {
        while self.step(t_ms) {}
        if self.core.now.get() < t_ms {
            self.core.now.set(t_ms);
        }
    }

    pub fn advance(&self, ms: u64) {
        self.run_until(self.now_ms() + ms);
    }

    /// Runs until no task is ready and no timer is due at the current instant.
    pub fn run_until_idle(&self) {
        self.run_until(self.now_ms());
    }
}

struct JoinState<T> {
    result: RefCell<Option<T>>,
    waker: RefCell<Option<Waker>>,
    finished: Cell<bool>,
}

/// Awaitable result of a spawned task. Dropping it detaches the task.
pub struct JoinHandle<T> {
    state: Rc<JoinState<T>>,
    core: Weak<Core>,
    id: usize,
}

impl<T> JoinHandle<T> {
    pub fn is_finished(&self) -> bool {
        self.state.finished.get()
    }

    /// Drops the task's future at its current await point.
    pub fn abort(&self) {
        if let Some(core) = self.core.upgrade() {
            let fut = core.tasks.borrow_mut().get_mut(self.id).and_then(Option::take);
            drop(fut);
        }
    }

    pub fn try_take(&self) -> Option<T> {
        self.state.result.borrow_mut().take()
    }
}

impl<T> Future for JoinHandle<T> {
    type Output = T;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<T> {
        if let Some(v) = self.state.result.borrow_mut().take() {
            return Poll::Ready(v);
        }
        *self.state.waker.borrow_mut() = Some(cx.waker().clone());
        Poll::Pending
    }
}

/// Virtual clock view handed to protocol code.
pub struct SimClock {
    core: Weak<Core>,
}

impl Clock for SimClock {
    fn now_ms(&self) -> u64 {
        self.core.upgrade().map_or(0, |c| c.now.get())
    }

    fn sleep_until(&self, deadline_ms: u64) -> LocalBoxFuture<'static, ()> {
        Sleep {
            core: self.core.clone(),
            deadline: deadline_ms,
            slot: None,
        }
        .boxed_local()
    }

    fn settle(&self) -> LocalBoxFuture<'static, ()> {
        Settle {
            core: self.core.clone(),
            slot: None,
        }
        .boxed_local()
    }
}

struct Sleep {
    core: Weak<Core>,
    deadline: u64,
    slot: Option<Rc<SleepSlot>>,
}

impl Future for Sleep {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        let Some(core) = self.core.upgrade() else {
            return Poll::Ready(());
        };
        if core.now.get() >= self.deadline {
            return Poll::Ready(());
        }
        match &self.slot {
            Some(slot) => *slot.waker.borrow_mut() = Some(cx.waker().clone()),
            None => {
                let slot = Rc::new(SleepSlot::default());
                *slot.waker.borrow_mut() = Some(cx.waker().clone());
                core.schedule(self.deadline, TimerAction::Wake(slot.clone()));
                self.slot = Some(slot);
            }
        }
        Poll::Pending
    }
}

impl Drop for Sleep {
    fn drop(&mut self) {
        if let Some(slot) = &self.slot {
            slot.cancelled.set(true);
        }
    }
}

struct Settle {
    core: Weak<Core>,
    slot: Option<Rc<SettleSlot>>,
}

impl Future for Settle {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<()> {
        let Some(core) = self.core.upgrade() else {
            return Poll::Ready(());
        };
        match &self.slot {
            Some(slot) if slot.fired.get() => Poll::Ready(()),
            Some(slot) => {
                *slot.waker.borrow_mut() = Some(cx.waker().clone());
                Poll::Pending
            }
            None => {
                let slot = Rc::new(SettleSlot {
                    waker: RefCell::new(Some(cx.waker().clone())),
                    fired: Cell::new(false),
                });
                core.settle.borrow_mut().push(slot.clone());
                self.slot = Some(slot);
                Poll::Pending
            }
        }
    }
}
