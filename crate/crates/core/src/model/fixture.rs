//! The reference sorting-line network.
//!
//! Topology (node roles use the plant's own shorthand):
//!
//! ```text
//! WC ──→ C1..C7 ──→ L, M, F ──┐
//!  │                          ↓
//!  ├────────────────────────→ BCD ──→ ACD ──→ AMD     (batch / assay)
//!  │                          │
//!  └────────────→ SCD ←───────┘
//!        ┌────────┴───────┐
//!        SS              SMD                          (per-sample)
//! ```
//!
//! * `WC` — waste composition of the pit section the batch came from.
//! * `C1..C7` — recorded waste characteristics (drum age, packaging, …),
//!   three levels each; synthetic but fixed tables varied per type.
//! * `L`, `M`, `F` — container condition: leakage, moisture migration,
//!   fines fraction. Each raises the batch contamination level.
//! * `BCD` — true batch contaminate density (log units).
//! * `ACD`/`AMD` — assay contaminate density and its measured value; `ACD`
//!   is the slow observation baked in at staging time.
//! * `SCD` — per-sample contaminate density; the quantity the divert
//!   decision is really about.
//! * `SS` — gamma sensor reading; `SMD` — verification measurement.
//!
//! The parameters are hand-chosen, not fitted. The one deliberate feature
//! is waste type 0: a high-gamma, low-transuranic "masker" that dominates
//! the prior. Its samples read hot on the gamma sensor while being very
//! clean, which makes the sensor→contamination response non-monotone and
//! the divert rule an interval set rather than a threshold — exactly the
//! regime the engine exists for.

use crate::model::{ClgRow, Network, NetworkBuilder, NodeId};

/// The reference network plus the node handles everything downstream needs.
#[derive(Debug, Clone)]
pub struct SortingLine {
    pub net: Network,
    /// WC — waste composition (discrete root).
    pub waste_type: NodeId,
    /// C1..C7 — recorded characteristics.
    pub characteristics: Vec<NodeId>,
    /// L, M, F — container condition nodes.
    pub leak: NodeId,
    pub moisture: NodeId,
    pub fines: NodeId,
    /// BCD — true batch contaminate density.
    pub batch_density: NodeId,
    /// ACD — assay contaminate density (slow evidence).
    pub assay: NodeId,
    /// AMD — assay measured density.
    pub assay_reading: NodeId,
    /// SCD — per-sample contaminate density (decision target).
    pub sample_density: NodeId,
    /// SS — gamma sensor reading (fast evidence).
    pub sensor: NodeId,
    /// SMD — verification measurement on diverted samples.
    pub check_reading: NodeId,
}

/// Most fixture parameters vary per waste type; type 0 is the masker.
/// Tables cover up to [`MAX_WASTE_TYPES`] types.
pub const MAX_WASTE_TYPES: usize = 8;

const RAW_PRIOR: [f64; MAX_WASTE_TYPES] = [5.5, 1.5, 1.2, 1.0, 0.8, 0.7, 0.6, 0.5];
/// Mean log batch contamination by type: the masker is clean, later types
/// increasingly hot.
const BASE: [f64; MAX_WASTE_TYPES] = [-4.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5];
/// Sample-vs-batch offset. Strongly negative for the masker: its activity
/// is gamma emitters, not transuranics, so individual samples carry almost
/// none of the contaminant the assay integrates over the batch.
const DISP: [f64; MAX_WASTE_TYPES] = [-6.0, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Gamma offset: ratio of gamma signal to contamination, by type.
const GAMMA: [f64; MAX_WASTE_TYPES] = [12.0, 1.5, 1.15, 0.8, 0.45, 0.1, -0.25, -0.6];
/// Sensor response slope in SCD — positive for every type, so each mixture
/// component correlates sensor and contamination positively.
const SLOPE: [f64; MAX_WASTE_TYPES] = [0.80, 0.80, 0.85, 0.75, 0.80, 0.85, 0.75, 0.80];
/// Per-sample dispersion (hot types are more heterogeneous).
const TAU: [f64; MAX_WASTE_TYPES] = [0.60, 1.00, 1.10, 1.20, 1.30, 1.40, 1.50, 1.60];
/// Sensor noise.
const NU: [f64; MAX_WASTE_TYPES] = [0.70, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90];

const BATCH_SD: f64 = 0.35;
const ASSAY_SD: f64 = 0.25;
const ASSAY_READ_SD: f64 = 0.20;
const CHECK_SD: f64 = 0.30;
/// Contamination lift when a condition node fires: leak, moisture, fines.
const CONDITION_LIFT: [f64; 3] = [0.9, 0.5, 0.4];

/// The three-waste-type instance used throughout the unit tests.
pub fn reference_fixture() -> SortingLine {
    reference_fixture_with(3)
}

/// The fixture with `waste_types` types (2..=8). The latency and
/// simulation acceptance runs use five.
pub fn reference_fixture_with(waste_types: usize) -> SortingLine {
    assert!(
        (2..=MAX_WASTE_TYPES).contains(&waste_types),
        "fixture supports 2..={MAX_WASTE_TYPES} waste types"
    );
    let n = waste_types;
    let mut b = NetworkBuilder::new("sorting-line");

    let state_names: Vec<String> = (0..n).map(|w| format!("wt{w}")).collect();
    let states: Vec<&str> = state_names.iter().map(|s| s.as_str()).collect();
    let prior_mass: f64 = RAW_PRIOR[..n].iter().sum();
    let prior: Vec<f64> = RAW_PRIOR[..n].iter().map(|r| r / prior_mass).collect();
    let waste_type = b.discrete("WC", &states, &[], vec![prior]);

    // Characteristics: three-level tables whose bias walks a fixed pattern
    // over (type, characteristic) so each type leaves a distinct signature.
    let characteristics: Vec<NodeId> = (0..7)
        .map(|i| {
            let cpt = (0..n)
                .map(|w| {
                    let t = ((w * 7 + i * 3) % 5) as f64 / 4.0;
                    let raw = [
                        1.0 + 2.0 * (1.0 - t),
                        1.0 + 2.0 * (1.0 - (2.0 * t - 1.0).abs()),
                        1.0 + 2.0 * t,
                    ];
                    let z: f64 = raw.iter().sum();
                    raw.iter().map(|r| r / z).collect()
                })
                .collect();
            b.discrete(
                &format!("C{}", i + 1),
                &["low", "mid", "high"],
                &[waste_type],
                cpt,
            )
        })
        .collect();

    let two_level = |b: &mut NetworkBuilder,
                     label: &str,
                     states: [&str; 2],
                     parents: &[NodeId],
                     cards: &[usize],
                     p_fire: &dyn Fn(&[usize]) -> f64| {
        let cpt = crate::indexing::configs(cards)
            .map(|cfg| {
                let p = p_fire(&cfg);
                vec![1.0 - p, p]
            })
            .collect();
        b.discrete(label, &[states[0], states[1]], parents, cpt)
    };
    let leak = two_level(
        &mut b,
        "L",
        ["intact", "breached"],
        &[characteristics[0], characteristics[1]],
        &[3, 3],
        &|c| 0.05 + 0.18 * (c[0] + c[1]) as f64,
    );
    let moisture = two_level(
        &mut b,
        "M",
        ["dry", "wet"],
        &[characteristics[2], characteristics[3]],
        &[3, 3],
        &|c| 0.05 + 0.15 * (c[0] + c[1]) as f64,
    );
    let fines = two_level(
        &mut b,
        "F",
        ["coarse", "fine"],
        &[characteristics[4], characteristics[5], characteristics[6]],
        &[3, 3, 3],
        &|c| 0.04 + 0.10 * (c[0] + c[1] + c[2]) as f64,
    );

    // Batch contaminate density: per (type, condition) intercepts.
    let bcd_rows = crate::indexing::configs(&[n, 2, 2, 2])
        .map(|cfg| ClgRow {
            intercept: BASE[cfg[0]]
                + CONDITION_LIFT[0] * cfg[1] as f64
                + CONDITION_LIFT[1] * cfg[2] as f64
                + CONDITION_LIFT[2] * cfg[3] as f64,
            coefficients: vec![],
            variance: BATCH_SD * BATCH_SD,
        })
        .collect();
    let batch_density = b.continuous("BCD", &[waste_type, leak, moisture, fines], bcd_rows);

    let gauss_child = |mean_coeff: f64, sd: f64| ClgRow {
        intercept: 0.0,
        coefficients: vec![mean_coeff],
        variance: sd * sd,
    };
    let assay = b.continuous("ACD", &[batch_density], vec![gauss_child(1.0, ASSAY_SD)]);
    let assay_reading = b.continuous("AMD", &[assay], vec![gauss_child(1.0, ASSAY_READ_SD)]);

    let scd_rows = (0..n)
        .map(|w| ClgRow {
            intercept: DISP[w],
            coefficients: vec![1.0],
            variance: TAU[w] * TAU[w],
        })
        .collect();
    let sample_density = b.continuous("SCD", &[waste_type, batch_density], scd_rows);

    let ss_rows = (0..n)
        .map(|w| ClgRow {
            intercept: GAMMA[w],
            coefficients: vec![SLOPE[w]],
            variance: NU[w] * NU[w],
        })
        .collect();
    let sensor = b.continuous("SS", &[waste_type, sample_density], ss_rows);

    let check_reading = b.continuous("SMD", &[sample_density], vec![gauss_child(1.0, CHECK_SD)]);

    SortingLine {
        net: b.build(),
        waste_type,
        characteristics,
        leak,
        moisture,
        fines,
        batch_density,
        assay,
        assay_reading,
        sample_density,
        sensor,
        check_reading,
    }
}
