//! Data sets for the beam-positioning squeezing-fraction scan and the pulse
//! separation scan.

use serde::{Deserialize, Serialize};

use crate::applications::pulse::{
    pulse_qfi_coherent_squeezed, pulse_qfi_thermal_squeezed, ConstantFlags,
};
use crate::applications::{
    displacement_qfi_general, pulse_mode_constants, BeamGeometry, BeamScenario, PulseConstants,
};
use crate::error::Result;
use crate::modes::PulseShape;
use crate::sweep::{try_map, Axis, Execution, Spacing};

/// QFI of a thermal beam against the population N₁ of its derivative mode, for
/// several squeezing fractions χ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementScan {
    pub n0: f64,
    pub chis: Vec<f64>,
    /// N₁ values besides N₁ = 0, which is always included.
    pub n1: Axis,
    pub waist: f64,
}

impl Default for DisplacementScan {
    fn default() -> Self {
        DisplacementScan {
            n0: 10.0,
            chis: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n1: Axis {
                min: 1e-2,
                max: 10.0,
                count: 61,
                spacing: Spacing::Log,
            },
            waist: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRow {
    pub chi: f64,
    #[serde(rename = "N1")]
    pub n1: f64,
    pub qfi: f64,
    pub qfi_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanOutput<R> {
    pub rows: Vec<R>,
    pub normalization: f64,
    pub warnings: Vec<String>,
}

/// Rows sorted by (χ, N₁); normalised by the N₁ = 0 value, which does not depend on χ.
pub fn displacement_scan(
    spec: &DisplacementScan,
    exec: Execution,
) -> Result<ScanOutput<DisplacementRow>> {
    spec.n1.validate()?;
    let geo = BeamGeometry::gaussian(spec.waist)?;
    let mut chis = spec.chis.clone();
    chis.sort_by(f64::total_cmp);
    chis.dedup();
    let mut n1s = vec![0.0];
    n1s.extend(spec.n1.points().into_iter().filter(|&x| x > 0.0));
    let points: Vec<(f64, f64)> = chis
        .iter()
        .flat_map(|&c| n1s.iter().map(move |&n| (c, n)))
        .collect();

    let baseline = displacement_qfi_general(&BeamScenario::new(geo, spec.n0))?;
    let values = try_map(&points, exec, |&(chi, n1)| {
        displacement_qfi_general(&BeamScenario::from_chi(geo, spec.n0, chi, n1)?)
    })?;
    let rows = points
        .iter()
        .zip(values)
        .map(|(&(chi, n1), qfi)| DisplacementRow {
            chi,
            n1,
            qfi,
            qfi_normalized: qfi / baseline,
        })
        .collect();
    let mut warnings = Vec::new();
    if baseline == 0.0 {
        warnings
            .push("baseline QFI is zero (N0 = 0); normalised values are not finite".to_string());
    }
    Ok(ScanOutput {
        rows,
        normalization: baseline,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Thermal,
    CoherentInPhase,
    CoherentOutOfPhase,
}

impl Source {
    pub const ALL: [Source; 3] = [
        Source::Thermal,
        Source::CoherentInPhase,
        Source::CoherentOutOfPhase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Source::Thermal => "thermal",
            Source::CoherentInPhase => "coherent-in-phase",
            Source::CoherentOutOfPhase => "coherent-out-of-phase",
        }
    }

    fn qfi(&self, n0: f64, r: f64, c: &PulseConstants) -> Result<f64> {
        match self {
            Source::Thermal => pulse_qfi_thermal_squeezed(n0, r, c),
            Source::CoherentInPhase => pulse_qfi_coherent_squeezed(n0, r, 0.0, c),
            Source::CoherentOutOfPhase => {
                pulse_qfi_coherent_squeezed(n0, r, std::f64::consts::PI, c)
            }
        }
    }
}

/// QFI for the pulse separation τ against τ/w.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseScan {
    pub shape: PulseShape,
    pub n0: f64,
    pub rs: Vec<f64>,
    pub sources: Vec<Source>,
    pub tau_over_w: Axis,
}

impl Default for PulseScan {
    fn default() -> Self {
        PulseScan {
            shape: PulseShape::Gaussian { width: 1.0 },
            n0: 1.0,
            rs: vec![0.0, 0.5, 1.0],
            sources: Source::ALL.to_vec(),
            tau_over_w: Axis {
                min: 0.01,
                max: 6.0,
                count: 120,
                spacing: Spacing::Linear,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseRow {
    pub tau_over_w: f64,
    pub source: Source,
    pub r: f64,
    pub qfi: f64,
    pub qfi_normalized: f64,
}

/// Rows sorted by (source, r, τ/w). Normalised by the largest thermal, r = 0 value on
/// the τ grid.
pub fn pulse_scan(spec: &PulseScan, exec: Execution) -> Result<ScanOutput<PulseRow>> {
    spec.shape.validate()?;
    spec.tau_over_w.validate()?;
    let w = spec.shape.width();
    let taus = spec.tau_over_w.points();
    let constants = try_map(&taus, exec, |&t| pulse_mode_constants(&spec.shape, t * w))?;

    let mut normalization = 0.0f64;
    for c in &constants {
        normalization = normalization.max(pulse_qfi_thermal_squeezed(spec.n0, 0.0, c)?);
    }

    let mut sources = spec.sources.clone();
    sources.sort();
    sources.dedup();
    let mut rs = spec.rs.clone();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let nt = taus.len();
    let points: Vec<(Source, f64, usize)> = sources
        .iter()
        .flat_map(|&s| {
            rs.iter()
                .flat_map(move |&r| (0..nt).map(move |i| (s, r, i)))
        })
        .collect();
    let values = try_map(&points, exec, |&(s, r, i)| s.qfi(spec.n0, r, &constants[i]))?;
    let rows = points
        .iter()
        .zip(values)
        .map(|(&(source, r, i), qfi)| PulseRow {
            tau_over_w: taus[i],
            source,
            r,
            qfi,
            qfi_normalized: qfi / normalization,
        })
        .collect();
    Ok(ScanOutput {
        rows,
        normalization,
        warnings: constant_warnings(&taus, &constants),
    })
}

fn constant_warnings(taus: &[f64], constants: &[PulseConstants]) -> Vec<String> {
    let pick = |f: fn(&ConstantFlags) -> bool| -> Vec<f64> {
        taus.iter()
            .zip(constants)
            .filter(|(_, c)| f(&c.flags))
            .map(|(t, _)| *t)
            .collect()
    };
    let mut out = Vec::new();
    let series = pick(|f| f.series);
    if let (Some(a), Some(b)) = (series.first(), series.last()) {
        out.push(format!(
            "series forms used for {} points with tau/w in [{a}, {b}]",
            series.len()
        ));
    }
    let lossy = pick(|f| f.cancellation);
    if let Some(b) = lossy.last() {
        out.push(format!(
            "quadrature constants below tau/w = {b} ({} points) keep only ~1e-6 relative accuracy",
            lossy.len()
        ));
    }
    let under = pick(|f| f.underflow);
    if let Some(a) = under.first() {
        out.push(format!(
            "overlap underflowed to zero from tau/w = {a} ({} points)",
            under.len()
        ));
    }
    out
}
