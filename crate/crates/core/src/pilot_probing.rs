//! Reduced-pilot probing schemes and the observation model
//! `Y = H F S + N`, decorrelated as `Ỹ = Y S^H`.
//!
//! Antenna indices are zero-based throughout.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;

use crate::channel_models::ChannelMatrix;
use crate::error::{invalid, Error, Result};
use crate::grid::{complement, GridPoint};
use crate::linalg::{CMatrix, CVector, C64};
use crate::rng::{complex_gaussian_matrix, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Case {
    /// Only the first transmit antenna is active: one column of `H`.
    CaseI,
    /// `⌈N_t/2⌉` equispaced transmit antennas: half of the columns.
    CaseII,
    /// All `min(N_r, N_t)` leading antennas active, only the diagonal retained.
    CaseIII,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::CaseI, Case::CaseII, Case::CaseIII];

    pub fn name(self) -> &'static str {
        match self {
            Case::CaseI => "case1",
            Case::CaseII => "case2",
            Case::CaseIII => "case3",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "case1" | "casei" | "i" | "1" => Ok(Case::CaseI),
            "case2" | "caseii" | "ii" | "2" => Ok(Case::CaseII),
            "case3" | "caseiii" | "iii" | "3" => Ok(Case::CaseIII),
            other => Err(invalid("scheme", format!("unknown probing case `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbingScheme {
    case: Case,
    n_rx: usize,
    n_tx: usize,
    active_set: Vec<usize>,
    observed: Vec<GridPoint>,
}

impl ProbingScheme {
    pub fn case(&self) -> Case {
        self.case
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    /// Active transmit antennas, in transmission order.
    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    /// Training indices `X`.
    pub fn observed_indices(&self) -> &[GridPoint] {
        &self.observed
    }

    /// Test indices `G \ X`, column-major.
    pub fn test_indices(&self) -> Vec<GridPoint> {
        complement(self.n_rx, self.n_tx, &self.observed)
    }

    /// Pilot length `T = n_t`, the minimum orthogonal length.
    pub fn pilot_length(&self) -> usize {
        self.active_set.len()
    }
}

/// Active set `{⌊m (N_t - 1) / (n_t - 1)⌋ : m = 0..n_t}` with `n_t = ⌈N_t/2⌉`,
/// duplicates removed in order.
pub fn equispaced_active_set(n_tx: usize) -> Vec<usize> {
    let n_active = n_tx.div_ceil(2);
    if n_active <= 1 {
        return vec![0];
    }
    let mut set: Vec<usize> = Vec::with_capacity(n_active);
    for m in 0..n_active {
        let idx = m * (n_tx - 1) / (n_active - 1);
        if set.last() != Some(&idx) {
            set.push(idx);
        }
    }
    set
}

pub fn make_scheme(case: Case, n_rx: usize, n_tx: usize) -> Result<ProbingScheme> {
    if n_rx == 0 || n_tx == 0 {
        return Err(invalid("array size", "n_rx and n_tx must be at least 1"));
    }
    let (active_set, observed) = match case {
        Case::CaseI => (vec![0], (0..n_rx).map(|r| GridPoint::new(r, 0)).collect()),
        Case::CaseII => {
            if n_tx < 2 {
                return Err(invalid("n_tx", "Case II needs at least two transmit antennas"));
            }
            let set = equispaced_active_set(n_tx);
            let obs = set
                .iter()
                .flat_map(|&c| (0..n_rx).map(move |r| GridPoint::new(r, c)))
                .collect();
            (set, obs)
        }
        Case::CaseIII => {
            let k = n_rx.min(n_tx);
            ((0..k).collect(), (0..k).map(|i| GridPoint::new(i, i)).collect())
        }
    };
    Ok(ProbingScheme {
        case,
        n_rx,
        n_tx,
        active_set,
        observed,
    })
}

/// First `n_active` rows of the unitary `T x T` DFT matrix (orthonormal rows).
pub fn build_pilot_matrix(n_active: usize, pilot_length: usize) -> Result<CMatrix> {
    if n_active == 0 {
        return Err(invalid("n_active", "must be at least 1"));
    }
    if pilot_length < n_active {
        return Err(invalid(
            "pilot_length",
            format!("{pilot_length} is shorter than the {n_active} active antennas"),
        ));
    }
    let t = pilot_length as f64;
    let norm = 1.0 / t.sqrt();
    Ok(CMatrix::from_fn(n_active, pilot_length, |k, n| {
        let angle = -2.0 * PI * ((k * n) % pilot_length) as f64 / t;
        C64::from_polar(norm, angle)
    }))
}

#[derive(Debug, Clone)]
pub struct PilotObservation {
    /// `Ỹ = Y S^H`, one column per active antenna.
    pub decorrelated: CMatrix,
    pub noise_variance: f64,
    pub scheme: ProbingScheme,
}

/// Simulates reduced-pilot training with `T = n_t` DFT pilots and
/// CN(0, `noise_variance`) receiver noise, returning the decorrelated output.
pub fn observe(
    channel: &ChannelMatrix,
    scheme: &ProbingScheme,
    noise_variance: f64,
    seed: u64,
) -> Result<PilotObservation> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(invalid("noise_variance", "must be finite and nonnegative"));
    }
    if channel.n_rx() != scheme.n_rx || channel.n_tx() != scheme.n_tx {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, scheme expects {}x{}",
            channel.n_rx(),
            channel.n_tx(),
            scheme.n_rx,
            scheme.n_tx
        )));
    }
    let n_active = scheme.active_set.len();
    let pilots = build_pilot_matrix(n_active, n_active)?;
    let h = channel.entries();
    // H F: the active columns of H.
    let mut hf = CMatrix::zeros(h.nrows(), n_active);
    for (k, &c) in scheme.active_set.iter().enumerate() {
        hf.set_column(k, &h.column(c));
    }
    let mut rng = rng_from_seed(seed);
    let noise = complex_gaussian_matrix(&mut rng, h.nrows(), n_active, noise_variance);
    let received = &hf * &pilots + noise;
    Ok(PilotObservation {
        decorrelated: received * pilots.adjoint(),
        noise_variance,
        scheme: scheme.clone(),
    })
}

/// Training inputs `Z` and complex targets `h` read off the decorrelated
/// observation at the scheme's observed indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub points: Vec<GridPoint>,
    pub values: CVector,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn real(&self) -> DVector<f64> {
        self.values.map(|z| z.re)
    }

    pub fn imag(&self) -> DVector<f64> {
        self.values.map(|z| z.im)
    }
}

pub fn extract_training_set(obs: &PilotObservation) -> TrainingSet {
    let scheme = &obs.scheme;
    let mut position = vec![usize::MAX; scheme.n_tx];
    for (k, &c) in scheme.active_set.iter().enumerate() {
        position[c] = k;
    }
    let values = CVector::from_iterator(
        scheme.observed.len(),
        scheme
            .observed
            .iter()
            .map(|p| obs.decorrelated[(p.row, position[p.col])]),
    );
    TrainingSet {
        points: scheme.observed.clone(),
        values,
    }
}
