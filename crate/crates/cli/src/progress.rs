//! Transfer progress line.

use std::io::Write;
use std::time::Duration;

const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];

pub fn human_bytes(n: u64) -> String {
    let mut v = n as f64;
    let mut unit = 0;
    while v >= 1024.0 && unit < UNITS.len() - 1 {
        v /= 1024.0;
        unit += 1;
    }
    if unit == 0 {
        format!("{n} B")
    } else {
        format!("{v:.1} {}", UNITS[unit])
    }
}

/// Percentage done, rounded down. An empty transfer is complete at once.
pub fn percent(done: u64, total: u64) -> u64 {
    if total == 0 {
        100
    } else {
        (done.min(total) as u128 * 100 / total as u128) as u64
    }
}

/// One status line, e.g. `50% 512 B of 1.0 KiB, 2.0 KiB/s`.
pub fn render_progress(done: u64, total: u64, elapsed: Duration) -> String {
    let secs = elapsed.as_secs_f64();
    let rate = if secs > 0.0 { (done as f64 / secs) as u64 } else { 0 };
    format!(
        "{}% {} of {}, {}/s",
        percent(done, total),
        human_bytes(done),
        human_bytes(total),
        human_bytes(rate)
    )
}

/// Writes progress updates: in place on a terminal, one line per change
/// otherwise. The percentage never goes backwards and 100% is written once.
pub struct ProgressLine<W: Write> {
    out: W,
    tty: bool,
    last: Option<u64>,
}

impl<W: Write> ProgressLine<W> {
    pub fn new(out: W, tty: bool) -> Self {
        ProgressLine { out, tty, last: None }
    }

    pub fn update(&mut self, done: u64, total: u64, elapsed: Duration) {
        let pct = percent(done, total);
        if self.last.is_some_and(|l| pct <= l) {
            return;
        }
        self.last = Some(pct);
        let line = render_progress(done, total, elapsed);
        let end = if pct == 100 || !self.tty { "\n" } else { "" };
        let start = if self.tty { "\r\x1b[K" } else { "" };
        let _ = write!(self.out, "{start}{line}{end}");
        let _ = self.out.flush();
    }

    /// Ends an unfinished in-place line so later output starts cleanly.
    pub fn finish(&mut self) {
        if self.tty && self.last.is_some_and(|l| l < 100) {
            let _ = writeln!(self.out);
            self.last = Some(100);
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!(render_progress(0, 100, Duration::ZERO).starts_with("0%"));
        assert!(render_progress(50, 100, Duration::from_secs(1)).starts_with("50%"));
        assert!(render_progress(100, 100, Duration::from_secs(1)).starts_with("100%"));
        assert_eq!(
            render_progress(512, 1024, Duration::from_millis(250)),
            "50% 512 B of 1.0 KiB, 2.0 KiB/s"
        );
    }

    #[test]
    fn hundred_percent_once_with_newline() {
        let mut p = ProgressLine::new(Vec::new(), false);
        for done in [0, 50, 50, 100, 100, 100] {
            p.update(done, 100, Duration::from_secs(1));
        }
        let text = String::from_utf8(p.into_inner()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(text.matches("100%").count(), 1);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn tty_overwrites_in_place() {
        let mut p = ProgressLine::new(Vec::new(), true);
        p.update(0, 10, Duration::ZERO);
        p.update(5, 10, Duration::ZERO);
        p.update(10, 10, Duration::ZERO);
        let text = String::from_utf8(p.into_inner()).unwrap();
        assert_eq!(text.matches('\n').count(), 1);
        assert!(text.ends_with("\n"));
        assert_eq!(text.matches('\r').count(), 3);
    }

    #[test]
    fn never_goes_backwards() {
        let mut p = ProgressLine::new(Vec::new(), false);
        p.update(60, 100, Duration::ZERO);
        p.update(40, 100, Duration::ZERO);
        let text = String::from_utf8(p.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn empty_transfer_is_complete() {
        assert_eq!(percent(0, 0), 100);
        let mut p = ProgressLine::new(Vec::new(), true);
        p.update(0, 0, Duration::ZERO);
        p.finish();
        let text = String::from_utf8(p.into_inner()).unwrap();
        assert_eq!(text.matches('\n').count(), 1);
    }

    #[test]
    fn aborted_tty_line_is_terminated() {
        let mut p = ProgressLine::new(Vec::new(), true);
        p.update(3, 10, Duration::ZERO);
        p.finish();
        assert!(String::from_utf8(p.into_inner()).unwrap().ends_with('\n'));
    }

    #[test]
    fn units() {
        assert_eq!(human_bytes(0), "0 B");
        assert_eq!(human_bytes(1023), "1023 B");
        assert_eq!(human_bytes(1 << 20), "1.0 MiB");
    }
}
