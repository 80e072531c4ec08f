//! In-browser playground for Peer Copy.
//!
//! The functions here return JSON strings so the page can stay plain
//! JavaScript. They are ordinary Rust and are tested natively; the
//! `wasm` module only re-exports them through wasm-bindgen.

use pcp_core::passphrase::{generate_passphrase, parse_passphrase};
use pcp_core::rendezvous::{discovery_key, query_keys, truncate_to_slot};
use pcp_core::simnet::scenario::{run_scenario, Scenario};
use pcp_core::simnet::SimConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

pub const SLOT_WIDTH_SECS: u64 = pcp_core::rendezvous::SLOT_WIDTH_SECS;

#[derive(Serialize)]
struct KeyView {
    id: String,
    content_key: String,
    slot_start: u64,
}

#[derive(Serialize)]
struct Rendezvous {
    code: String,
    words: usize,
    channel: u16,
    /// What a sender starting now would publish under.
    publish: KeyView,
    /// What a receiver starting now would look up, in order.
    query: Vec<KeyView>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// A fresh code of `words` words. `seed` comes from the page's CSPRNG.
pub fn generate_code(words: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    generate_passphrase(words, &mut rng)
        .map(|p| p.to_string())
        .map_err(|e| e.to_string())
}

/// Channel and discovery ids for `code` at `unix_secs`.
pub fn derive(code: &str, unix_secs: u64) -> Result<String, String> {
    let p = parse_passphrase(code).map_err(|e| e.to_string())?;
    let slot = truncate_to_slot(unix_secs, SLOT_WIDTH_SECS).map_err(|e| e.to_string())?;
    let view = |k: pcp_core::rendezvous::DiscoveryKey| KeyView {
        id: k.id().to_string(),
        content_key: k.content_key().to_hex(),
        slot_start: k.slot().start(),
    };
    let publish = view(discovery_key(p.channel_id().into(), slot).map_err(|e| e.to_string())?);
    let query = query_keys(p.channel_id(), unix_secs, SLOT_WIDTH_SECS)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(view)
        .collect();
    Ok(json(&Rendezvous {
        code: p.to_string(),
        words: p.len(),
        channel: p.channel_id(),
        publish,
        query,
    }))
}

/// For receivers arriving `0, step, 2*step, ..` seconds (up to `max_delay`)
/// after a sender that published once at `sender_secs`: does any key they
/// query match the one published?
pub fn slot_coverage(sender_secs: u64, max_delay: u64, step: u64) -> Result<String, String> {
    if step == 0 {
        return Err("step must be positive".into());
    }
    let sender = truncate_to_slot(sender_secs, SLOT_WIDTH_SECS).map_err(|e| e.to_string())?;
    let published = discovery_key(0, sender).map_err(|e| e.to_string())?;
    let mut found = Vec::new();
    let mut d = 0;
    while d <= max_delay {
        let keys = query_keys(0, sender_secs + d, SLOT_WIDTH_SECS).map_err(|e| e.to_string())?;
        found.push(keys.iter().any(|k| k.id() == published.id()));
        d += step;
    }
    #[derive(Serialize)]
    struct Coverage {
        sender_slot_start: u64,
        offset_in_slot: u64,
        step: u64,
        found: Vec<bool>,
    }
    Ok(json(&Coverage {
        sender_slot_start: sender.start(),
        offset_in_slot: sender_secs - sender.start(),
        step,
        found,
    }))
}

pub fn scenario_names() -> String {
    json(&Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())
}

/// Runs a named scenario on the virtual network and returns its report
/// with the full trace.
pub fn simulate(name: &str, seed: u64) -> Result<String, String> {
    let scenario: Scenario = name.parse()?;
    let config = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let (report, net) = run_scenario(scenario, &config).map_err(|e| e.to_string())?;
    let trace: Vec<serde_json::Value> = net
        .trace_jsonl()
        .lines()
        .map(|l| serde_json::from_str(l).expect("trace line is JSON"))
        .collect();
    #[derive(Serialize)]
    struct Out<'a> {
        description: &'a str,
        report: pcp_core::simnet::scenario::ScenarioReport,
        trace: Vec<serde_json::Value>,
    }
    Ok(json(&Out {
        description: scenario.describe(),
        report,
        trace,
    }))
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn err(e: String) -> JsError {
        JsError::new(&e)
    }

    #[wasm_bindgen(js_name = generateCode)]
    pub fn generate_code(words: u32, seed_hi: u32, seed_lo: u32) -> Result<String, JsError> {
        super::generate_code(words as usize, (u64::from(seed_hi) << 32) | u64::from(seed_lo)).map_err(err)
    }

    #[wasm_bindgen]
    pub fn derive(code: &str, unix_secs: f64) -> Result<String, JsError> {
        super::derive(code, unix_secs.max(0.0) as u64).map_err(err)
    }

    #[wasm_bindgen(js_name = slotCoverage)]
    pub fn slot_coverage(sender_secs: f64, max_delay: u32, step: u32) -> Result<String, JsError> {
        super::slot_coverage(sender_secs.max(0.0) as u64, max_delay.into(), step.into()).map_err(err)
    }

    #[wasm_bindgen(js_name = scenarioNames)]
    pub fn scenario_names() -> String {
        super::scenario_names()
    }

    #[wasm_bindgen]
    pub fn simulate(name: &str, seed: u32) -> Result<String, JsError> {
        super::simulate(name, seed.into()).map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn generated_codes_derive() {
        let code = generate_code(4, 9).unwrap();
        assert_eq!(code.split('-').count(), 4);
        let v: Value = serde_json::from_str(&derive(&code, 1_617_283_473).unwrap()).unwrap();
        assert_eq!(v["words"], 4);
        assert_eq!(v["publish"]["slot_start"], 1_617_283_200u64);
        assert_eq!(v["query"].as_array().unwrap().len(), 2);
        assert_eq!(v["query"][0]["id"], v["publish"]["id"]);
        assert!(generate_code(1, 0).is_err());
        assert!(derive("not-words", 0).is_err());
    }

    #[test]
    fn coverage_is_one_slot_plus_remainder() {
        // Sender 73 s into its slot; the previous-slot query reaches until
        // the end of the following slot.
        let v: Value = serde_json::from_str(&slot_coverage(1_617_283_273, 600, 1).unwrap()).unwrap();
        let found: Vec<bool> = serde_json::from_value(v["found"].clone()).unwrap();
        let covered = found.iter().take_while(|f| **f).count() as u64;
        assert_eq!(covered, 2 * SLOT_WIDTH_SECS - 73);
        assert!(found[covered as usize..].iter().all(|f| !f));
        assert!(slot_coverage(0, 10, 0).is_err());
    }

    #[test]
    fn every_scenario_runs() {
        let names: Vec<String> = serde_json::from_str(&scenario_names()).unwrap();
        assert_eq!(names.len(), Scenario::ALL.len());
        for n in names {
            let v: Value = serde_json::from_str(&simulate(&n, 3).unwrap()).unwrap();
            assert_eq!(v["report"]["passed"], true, "{n}");
            assert!(!v["trace"].as_array().unwrap().is_empty());
        }
        assert!(simulate("nope", 0).is_err());
    }
}
