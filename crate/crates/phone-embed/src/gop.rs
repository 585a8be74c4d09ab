//! Goodness-of-pronunciation scoring from frame posterior lattices.
//!
//! A canonical phone's log posterior over a span is the frame-averaged log
//! of the total posterior mass carried by the phone's context-dependent
//! states. The GOP score subtracts the best competing phone's log posterior,
//! so it is always <= 0 and exactly 0 when the canonical phone is (one of)
//! the best.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Default decision threshold for GOP verification.
pub const DEFAULT_GOP_THRESHOLD: f64 = 0.1;

/// Per-frame posteriors over context-dependent states, with the map from
/// state column to central phone.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorLattice {
    frames: usize,
    num_states: usize,
    /// `frames x num_states`, row-major; each row sums to 1 within 1e-6.
    posteriors: Vec<f64>,
    state_phone: Vec<String>,
}

impl PosteriorLattice {
    pub fn new(
        frames: usize,
        num_states: usize,
        posteriors: Vec<f64>,
        state_phone: Vec<String>,
    ) -> Result<PosteriorLattice> {
        if frames == 0 || num_states == 0 {
            return Err(Error::InvalidLattice(format!(
                "lattice must be at least 1x1, got {frames}x{num_states}"
            )));
        }
        if posteriors.len() != frames * num_states {
            return Err(Error::DimensionMismatch {
                context: "lattice posteriors",
                expected: frames * num_states,
                got: posteriors.len(),
            });
        }
        if state_phone.len() != num_states {
            return Err(Error::DimensionMismatch {
                context: "lattice state map",
                expected: num_states,
                got: state_phone.len(),
            });
        }
        for (t, row) in posteriors.chunks_exact(num_states).enumerate() {
            let mut sum = 0.0;
            for (s, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidLattice(format!(
                        "posterior at frame {t}, state {s} is {p}, outside [0, 1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidLattice(format!(
                    "frame {t} posteriors sum to {sum}, expected 1"
                )));
            }
        }
        Ok(PosteriorLattice {
            frames,
            num_states,
            posteriors,
            state_phone,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn posterior(&self, frame: usize, state: usize) -> f64 {
        self.posteriors[frame * self.num_states + state]
    }

    pub fn state_phone(&self, state: usize) -> &str {
        &self.state_phone[state]
    }

    /// Distinct phones appearing in the state map, sorted.
    pub fn phone_pool(&self) -> Vec<String> {
        self.state_phone
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn states_of(&self, phone: &str) -> Vec<usize> {
        (0..self.num_states)
            .filter(|&s| self.state_phone[s] == phone)
            .collect()
    }
}

/// A phone occurrence: half-open frame interval `[start, end)`, so the
/// normalizer `end - start` equals the number of summed frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneSpan {
    pub phone: String,
    pub start: usize,
    pub end: usize,
}

impl PhoneSpan {
    pub fn new(phone: impl Into<String>, start: usize, end: usize) -> PhoneSpan {
        PhoneSpan {
            phone: phone.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GopResult {
    pub phone: String,
    /// Frame-averaged log posterior of the canonical phone.
    pub log_posterior: f64,
    /// Log ratio against the best pool phone; always <= 0.
    pub gop: f64,
    /// The argmax competitor, ties broken by lexicographic phone id.
    pub best_competitor: String,
}

/// Verification decision for one phone occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

fn check_span(lattice: &PosteriorLattice, span: &PhoneSpan) -> Result<()> {
    if span.start >= span.end || span.end > lattice.frames {
        return Err(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            frames: lattice.frames,
        });
    }
    Ok(())
}

/// Frame-averaged log posterior of `phone` over `span`.
///
/// Returns `-inf` when the phone's states carry zero mass at any frame,
/// which keeps ordering and max total.
pub fn phone_log_posterior(
    lattice: &PosteriorLattice,
    phone: &str,
    span: &PhoneSpan,
) -> Result<f64> {
    check_span(lattice, span)?;
    let states = lattice.states_of(phone);
    if states.is_empty() {
        return Err(Error::UnknownPhone(phone.to_string()));
    }
    let mut total = 0.0;
    for t in span.start..span.end {
        let mass: f64 = states.iter().map(|&s| lattice.posterior(t, s)).sum();
        if mass <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        total += mass.ln();
    }
    Ok(total / (span.end - span.start) as f64)
}

/// GOP score of the canonical phone against a pool of competitors.
///
/// `gop = log_posterior(canonical) - max_q log_posterior(q)`, with the
/// canonical phone included in the pool so the score is never positive.
pub fn gop_score(
    lattice: &PosteriorLattice,
    canonical: &str,
    span: &PhoneSpan,
    pool: &[String],
) -> Result<GopResult> {
    if pool.is_empty() {
        return Err(Error::invalid("gop pool must not be empty"));
    }
    if !pool.iter().any(|p| p == canonical) {
        return Err(Error::invalid(format!(
            "canonical phone `{canonical}` is not in the pool"
        )));
    }
    let canonical_lp = phone_log_posterior(lattice, canonical, span)?;

    let mut best: Option<(&str, f64)> = None;
    for q in pool {
        let lp = phone_log_posterior(lattice, q, span)?;
        let better = match best {
            None => true,
            Some((bq, blp)) => lp > blp || (lp == blp && q.as_str() < bq),
        };
        if better {
            best = Some((q, lp));
        }
    }
    let (best_phone, best_lp) = best.expect("pool is non-empty");

    // exact tie with the max means the canonical phone is an argmax;
    // defining this case as 0 also keeps -inf lattices NaN-free
    let gop = if canonical_lp == best_lp {
        0.0
    } else {
        canonical_lp - best_lp
    };
    Ok(GopResult {
        phone: canonical.to_string(),
        log_posterior: canonical_lp,
        gop,
        best_competitor: best_phone.to_string(),
    })
}

/// Accept iff `gop >= -threshold`: scores are <= 0 and sit near 0 when the
/// canonical phone is close to best.
pub fn gop_verify(result: &GopResult, threshold: f64) -> Decision {
    if result.gop >= -threshold {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

#[derive(Serialize, Deserialize)]
struct StateSidecar {
    states: Vec<String>,
}

/// Sidecar path of a lattice file: `foo.phnf` -> `foo.states.json`.
pub fn lattice_sidecar_path(lattice_path: &Path) -> PathBuf {
    let mut name = lattice_path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    name.push_str(".states.json");
    lattice_path.with_file_name(name)
}

/// Reads a lattice from the binary matrix format plus its sidecar state map.
pub fn read_lattice(path: &Path) -> Result<PosteriorLattice> {
    let bytes = io::read_file(path)?;
    let mut r = io::Reader::new(path, &bytes);
    r.expect_magic(io::FEATURE_MAGIC)?;
    r.expect_version()?;
    let frames = r.read_u32()? as usize;
    let num_states = r.read_u32()? as usize;
    let raw = r.read_f32s(frames * num_states)?;
    r.finish()?;

    let sidecar_path = lattice_sidecar_path(path);
    let sidecar: StateSidecar = serde_json::from_slice(&io::read_file(&sidecar_path)?)
        .map_err(|e| Error::InvalidLattice(format!("{}: {e}", sidecar_path.display())))?;

    PosteriorLattice::new(
        frames,
        num_states,
        raw.into_iter().map(f64::from).collect(),
        sidecar.states,
    )
}

/// Writes a lattice and its sidecar state map atomically.
pub fn write_lattice(path: &Path, lattice: &PosteriorLattice) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + lattice.posteriors.len() * 4);
    buf.extend_from_slice(io::FEATURE_MAGIC);
    io::push_u32(&mut buf, io::FORMAT_VERSION);
    io::push_u32(&mut buf, lattice.frames as u32);
    io::push_u32(&mut buf, lattice.num_states as u32);
    for v in &lattice.posteriors {
        io::push_f32(&mut buf, *v as f32);
    }
    io::atomic_write(path, &buf)?;

    let sidecar = StateSidecar {
        states: lattice.state_phone.clone(),
    };
    io::atomic_write(
        &lattice_sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)
            .expect("state map serializes")
            .as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Lattice where `s1`/`s2` belong to phone `aa` and each frame gives
    /// them the stated total mass, with `bb` soaking up the rest.
    fn two_phone_lattice(aa_mass_per_frame: &[f64]) -> PosteriorLattice {
        let mut rows = Vec::new();
        for &mass in aa_mass_per_frame {
            rows.extend_from_slice(&[mass * 0.25, mass * 0.75, 1.0 - mass]);
        }
        PosteriorLattice::new(
            aa_mass_per_frame.len(),
            3,
            rows,
            vec!["aa".into(), "aa".into(), "bb".into()],
        )
        .unwrap()
    }

    /// Unvectorized reference: explicit loops over frames and states.
    fn brute_force_log_posterior(
        lattice: &PosteriorLattice,
        phone: &str,
        span: &PhoneSpan,
    ) -> f64 {
        let mut acc = 0.0;
        for t in span.start..span.end {
            let mut mass = 0.0;
            for s in 0..lattice.num_states() {
                if lattice.state_phone(s) == phone {
                    mass += lattice.posterior(t, s);
                }
            }
            acc += mass.ln();
        }
        acc / (span.end - span.start) as f64
    }

    fn random_lattice(rng: &mut ChaCha8Rng, max_frames: usize, max_states: usize, max_phones: usize) -> PosteriorLattice {
        let frames = rng.random_range(1..=max_frames);
        let num_phones = rng.random_range(1..=max_phones);
        // at least one state per phone
        let num_states = rng.random_range(num_phones..=max_states.max(num_phones));
        let mut state_phone: Vec<String> =
            (0..num_phones).map(|p| format!("p{p:02}")).collect();
        for _ in num_phones..num_states {
            state_phone.push(format!("p{:02}", rng.random_range(0..num_phones)));
        }
        let mut posteriors = Vec::with_capacity(frames * num_states);
        for _ in 0..frames {
            let mut row: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 1e-9).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            posteriors.extend(row);
        }
        PosteriorLattice::new(frames, num_states, posteriors, state_phone).unwrap()
    }

    #[test]
    fn half_mass_over_two_frames_is_log_half() {
        let lattice = two_phone_lattice(&[0.5, 0.5]);
        let lp =
            phone_log_posterior(&lattice, "aa", &PhoneSpan::new("aa", 0, 2)).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-12, "{lp}");
        assert!((lp + 0.693147).abs() < 1e-6);
    }

    #[test]
    fn full_mass_means_zero_log_posterior() {
        let lattice = two_phone_lattice(&[1.0, 1.0, 1.0]);
        let lp =
            phone_log_posterior(&lattice, "aa", &PhoneSpan::new("aa", 0, 3)).unwrap();
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn zero_mass_frame_yields_negative_infinity() {
        let lattice = two_phone_lattice(&[0.5, 0.0]);
        let lp =
            phone_log_posterior(&lattice, "aa", &PhoneSpan::new("aa", 0, 2)).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn span_and_phone_errors() {
        let lattice = two_phone_lattice(&[0.5]);
        assert!(matches!(
            phone_log_posterior(&lattice, "aa", &PhoneSpan::new("aa", 0, 2)).unwrap_err(),
            Error::SpanOutOfRange { .. }
        ));
        assert!(matches!(
            phone_log_posterior(&lattice, "zz", &PhoneSpan::new("zz", 0, 1)).unwrap_err(),
            Error::UnknownPhone(_)
        ));
    }

    #[test]
    fn canonical_argmax_scores_exactly_zero() {
        let lattice = two_phone_lattice(&[0.9, 0.8]);
        let pool = vec!["aa".to_string(), "bb".to_string()];
        let result =
            gop_score(&lattice, "aa", &PhoneSpan::new("aa", 0, 2), &pool).unwrap();
        assert_eq!(result.gop, 0.0);
        assert_eq!(result.best_competitor, "aa");
    }

    #[test]
    fn gop_subtracts_the_pool_max() {
        // aa carries mass 0.4 per frame, bb 0.6: gop = ln 0.4 - ln 0.6
        let lattice = PosteriorLattice::new(
            2,
            3,
            vec![0.2, 0.2, 0.6, 0.2, 0.2, 0.6],
            vec!["aa".into(), "aa".into(), "bb".into()],
        )
        .unwrap();
        let pool = vec!["aa".to_string(), "bb".to_string()];
        let span = PhoneSpan::new("aa", 0, 2);
        let result = gop_score(&lattice, "aa", &span, &pool).unwrap();
        let aa = brute_force_log_posterior(&lattice, "aa", &span);
        let bb = brute_force_log_posterior(&lattice, "bb", &span);
        assert!((result.gop - (aa - bb)).abs() < 1e-12);
        assert!(result.gop < 0.0);
        assert_eq!(result.best_competitor, "bb");
    }

    #[test]
    fn singleton_pool_scores_zero() {
        let lattice = two_phone_lattice(&[0.3, 0.4]);
        let pool = vec!["aa".to_string()];
        let result =
            gop_score(&lattice, "aa", &PhoneSpan::new("aa", 0, 2), &pool).unwrap();
        assert_eq!(result.gop, 0.0);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let lattice = two_phone_lattice(&[0.5]);
        assert!(gop_score(&lattice, "aa", &PhoneSpan::new("aa", 0, 1), &[]).is_err());
    }

    #[test]
    fn verify_threshold_examples() {
        let mut result = GopResult {
            phone: "aa".into(),
            log_posterior: 0.0,
            gop: 0.0,
            best_competitor: "aa".into(),
        };
        assert_eq!(gop_verify(&result, 0.1), Decision::Accept);
        result.gop = -0.05;
        assert_eq!(gop_verify(&result, 0.1), Decision::Accept);
        result.gop = -0.47;
        assert_eq!(gop_verify(&result, 0.1), Decision::Reject);
    }

    #[test]
    fn matches_brute_force_on_random_lattices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..200 {
            let lattice = random_lattice(&mut rng, 10, 20, 6);
            let pool = lattice.phone_pool();
            let start = rng.random_range(0..lattice.frames());
            let end = rng.random_range(start + 1..=lattice.frames());
            let canonical = &pool[rng.random_range(0..pool.len())];
            let span = PhoneSpan::new(canonical.clone(), start, end);

            let lp = phone_log_posterior(&lattice, canonical, &span).unwrap();
            let brute = brute_force_log_posterior(&lattice, canonical, &span);
            assert!((lp - brute).abs() < 1e-12);

            let result = gop_score(&lattice, canonical, &span, &pool).unwrap();
            let brute_max = pool
                .iter()
                .map(|q| brute_force_log_posterior(&lattice, q, &span))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(result.gop <= 0.0);
            assert!((result.gop - (brute - brute_max)).abs() < 1e-12 || result.gop == 0.0);
            if (brute - brute_max).abs() < 1e-15 {
                assert_eq!(result.gop, 0.0);
            }
        }
    }

    #[test]
    fn pool_permutation_never_changes_gop() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let lattice = random_lattice(&mut rng, 8, 12, 5);
            let mut pool = lattice.phone_pool();
            let canonical = pool[0].clone();
            let span = PhoneSpan::new(canonical.clone(), 0, lattice.frames());
            let a = gop_score(&lattice, &canonical, &span, &pool).unwrap();
            pool.reverse();
            let b = gop_score(&lattice, &canonical, &span, &pool).unwrap();
            assert_eq!(a.gop, b.gop);
            assert_eq!(a.best_competitor, b.best_competitor);
        }
    }

    #[test]
    fn gop_is_invariant_under_state_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..50 {
            let lattice = random_lattice(&mut rng, 6, 10, 4);
            let n = lattice.num_states();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut posteriors = vec![0.0; lattice.frames() * n];
            let mut state_phone = vec![String::new(); n];
            for (new, &old) in perm.iter().enumerate() {
                state_phone[new] = lattice.state_phone(old).to_string();
                for t in 0..lattice.frames() {
                    posteriors[t * n + new] = lattice.posterior(t, old);
                }
            }
            let permuted =
                PosteriorLattice::new(lattice.frames(), n, posteriors, state_phone).unwrap();
            let pool = lattice.phone_pool();
            let canonical = &pool[rng.random_range(0..pool.len())];
            let span = PhoneSpan::new(canonical.clone(), 0, lattice.frames());
            let a = gop_score(&lattice, canonical, &span, &pool).unwrap();
            let b = gop_score(&permuted, canonical, &span, &pool).unwrap();
            // permuting columns reorders the per-phone mass sums, so values
            // agree to rounding rather than bitwise
            assert!((a.gop - b.gop).abs() < 1e-12);
            assert!((a.log_posterior - b.log_posterior).abs() < 1e-12);
            assert_eq!(a.best_competitor, b.best_competitor);
        }
    }

    #[test]
    fn lattice_round_trips_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.phnf");
        let lattice = two_phone_lattice(&[0.25, 0.5, 0.75]);
        write_lattice(&path, &lattice).unwrap();
        assert!(lattice_sidecar_path(&path).exists());
        let back = read_lattice(&path).unwrap();
        assert_eq!(back, lattice);
    }
}
