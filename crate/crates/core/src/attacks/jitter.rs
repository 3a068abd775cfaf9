use serde_json::{json, Map, Value};

use super::{param_err, AttackError, Finished, JitterParams, Scenario};
use crate::analysis::{
    classify_traffic, compute_slot_offsets, estimate_slot_anchor, OffsetGenerator, OffsetStats, TrafficClass,
    MIN_CLASSIFY_SAMPLES,
};
use crate::pta::{Line, PtaConfig, PtaLines};
use crate::report::Verdict;
use crate::sim::{RngStream, SimTime, StreamId, TraceRecorder, BT_SLOT};

/// Slots between consecutive Bluetooth requests. Offsets are clamped to
/// half of this so requests never reorder.
const SLOTS_PER_SAMPLE: u64 = 128;
const REQUEST_HOLD: SimTime = SimTime::from_micros(100);
pub const ACCURACY_THRESHOLD: f64 = 0.8;

/// Wi-Fi samples REQUEST at 10 us and guesses the Bluetooth traffic type
/// from where in the slot the requests land.
pub fn run_jitter_classify(s: &Scenario, p: &JitterParams, trace: &mut TraceRecorder) -> Result<Finished, AttackError> {
    if p.n_samples < MIN_CLASSIFY_SAMPLES {
        return Err(param_err(
            "attack.params.n_samples",
            format!("need at least {MIN_CLASSIFY_SAMPLES}"),
        ));
    }
    if !(p.sigma_scale.is_finite() && p.sigma_scale > 0.0) {
        return Err(param_err("attack.params.sigma_scale", "must be positive"));
    }
    let classes: Vec<TrafficClass> = match p.traffic {
        Some(c) => vec![c],
        None => TrafficClass::ALL.to_vec(),
    };
    let cfg = PtaConfig::default();
    let mut jitter = RngStream::new(s.seed, StreamId::PtaJitter);
    let mut traffic = RngStream::new(s.seed, StreamId::Traffic);
    let anchor = SimTime::from_nanos(traffic.below(BT_SLOT.as_nanos()));
    let mut lines = PtaLines::new(cfg.sample_period);

    let mut confusion = [[0u64; 3]; 3];
    let mut raw: [Vec<f64>; 3] = Default::default();
    let spacing = BT_SLOT * SLOTS_PER_SAMPLE;
    let reach = (spacing.as_nanos() / 2 - REQUEST_HOLD.as_nanos()) as i64;
    let mut base = anchor;
    for &class in &classes {
        let generator = OffsetGenerator::for_class(class, p.sigma_scale);
        for _ in 0..p.trials {
            let trial_start = base;
            for k in 0..p.n_samples as u64 {
                let off = generator.sample(&mut jitter);
                raw[class.index()].push(off);
                let shift = ((off * 1000.0).round() as i64).clamp(-reach, reach);
                let edge = (base + spacing * (k + 1)).offset(shift);
                lines.drive(Line::Request, edge, true, trace);
                lines.drive(Line::Request, edge + REQUEST_HOLD, false, trace);
            }
            base += spacing * (p.n_samples as u64 + 1);
            if !s.enabled {
                continue;
            }
            let seen: Vec<SimTime> = lines
                .observed_edges(Line::Request)
                .into_iter()
                .filter(|&(t, up)| up && t >= trial_start && t < base)
                .map(|(t, _)| t)
                .collect();
            let a = if p.anchor_known {
                anchor
            } else {
                estimate_slot_anchor(&seen, cfg.sample_period)
            };
            let samples = compute_slot_offsets(&seen, a);
            let got = classify_traffic(&samples).map_err(|e| AttackError::Sim(e.to_string()))?;
            trace.record(base, "attack.wifi", got.class.index() as i64);
            confusion[class.index()][got.class.index()] += 1;
        }
    }

    let mut per_class = Map::new();
    let mut generated = Map::new();
    let mut all_pass = s.enabled;
    let (mut right, mut total) = (0u64, 0u64);
    for &c in &classes {
        let row = confusion[c.index()];
        let n: u64 = row.iter().sum();
        let acc = if n == 0 { 0.0 } else { row[c.index()] as f64 / n as f64 };
        all_pass &= acc >= ACCURACY_THRESHOLD;
        right += row[c.index()];
        total += n;
        per_class.insert(c.as_str().into(), json!(acc));
        generated.insert(c.as_str().into(), json!(OffsetStats::of(&raw[c.index()])));
    }
    let accuracy = if total == 0 { 0.0 } else { right as f64 / total as f64 };
    let mut matrix = Map::new();
    for &c in &classes {
        let row: Map<String, Value> = TrafficClass::ALL
            .iter()
            .map(|&g| (g.as_str().to_owned(), json!(confusion[c.index()][g.index()])))
            .collect();
        matrix.insert(c.as_str().into(), Value::Object(row));
    }
    let chance = 1.0 / classes.len() as f64;
    let verdict = if all_pass {
        Verdict::Success
    } else if total > 0 && accuracy > chance + 0.5 * (1.0 - chance) {
        Verdict::Partial
    } else {
        Verdict::Failed
    };
    let metrics = json!({
        "n_samples": p.n_samples,
        "trials": p.trials,
        "sigma_scale": p.sigma_scale,
        "anchor_known": p.anchor_known,
        "accuracy": accuracy,
        "per_class_accuracy": per_class,
        "confusion": matrix,
        "generated_stats": generated,
    });
    let label = if all_pass { "separable" } else { "confused" };
    Ok(Finished::new(verdict, label, metrics, base))
}
