//! Random-data experiments comparing the compact spectrum against the dense
//! reference.
//!
//! A run chains three steps on one pair buffer of capacity `m`:
//!
//! 1. `m − 1` random pairs; compact form, QR from scratch, spectrum.
//! 2. One more pair; its columns are appended to the existing QR factor.
//! 3. The buffer is full, so the oldest pair is evicted (leading columns
//!    deleted from the factor) and a new pair appended.
//!
//! Experiment `k` reports the relative error after step `k`.

use std::fmt::Write as _;
use std::time::Instant;

use log::debug;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compact::{self, CompactForm, UpdateFamily};
use crate::oracle::{self, MAX_DENSE_DIM};
use crate::pair_store::{Pair, PairBuffer, DEFAULT_MEMORY};
use crate::qr_engine::ThinQR;
use crate::spectrum::{self, Spectrum};
use crate::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 3.0;
pub const DEFAULT_PHI: f64 = 0.5;

/// Draws before the generator gives up on finding an acceptable pair.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub family: UpdateFamily,
    pub seed: u64,
    /// 1, 2 or 3.
    pub experiment: u8,
    /// Compare against the dense reference. Ignored above the dense size
    /// limit.
    pub oracle: bool,
}

impl ExperimentConfig {
    pub fn new(n: usize, family: UpdateFamily) -> Self {
        Self {
            n,
            m: DEFAULT_MEMORY,
            gamma: DEFAULT_GAMMA,
            family,
            seed: 0,
            experiment: 1,
            oracle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("memory m must be at least 1".into()));
        }
        if self.n < 2 * self.m + 2 {
            return Err(Error::InvalidArgument(format!(
                "n = {} is below 2m + 2 = {}",
                self.n,
                2 * self.m + 2
            )));
        }
        if !(1..=3).contains(&self.experiment) {
            return Err(Error::InvalidArgument(format!(
                "unknown experiment {}",
                self.experiment
            )));
        }
        if !self.gamma.is_finite()
            || self.gamma == 0.0
            || (!self.family.is_sr1() && self.gamma < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "gamma = {} is not allowed for {}",
                self.gamma, self.family
            )));
        }
        if let UpdateFamily::Broyden { phi } = self.family {
            UpdateFamily::broyden(phi)?;
        }
        Ok(())
    }

    fn uses_oracle(&self) -> bool {
        self.oracle && self.n <= MAX_DENSE_DIM
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Relative error against the dense spectrum, when it was computed.
    pub re: Option<f64>,
    /// Relative gap between the incrementally maintained spectrum and one
    /// from a freshly factored `Ψ̂`. `None` for experiment 1.
    pub incremental_gap: Option<f64>,
    /// Seconds spent in the compact, QR and spectrum steps.
    pub t_method: f64,
    /// Seconds spent forming `B` densely and solving for its spectrum.
    pub t_oracle: Option<f64>,
    /// The QR factor had to be rebuilt from scratch during this step.
    pub rebuilt: bool,
    /// Ascending spectrum from the compact path.
    pub spectrum: Vec<f64>,
}

impl ExperimentReport {
    pub fn passes(&self, gate: f64) -> bool {
        self.re.is_none_or(|re| re <= gate)
    }
}

/// Seeded stream of random pairs with uniform(−1, 1) entries.
#[derive(Debug, Clone)]
pub struct PairGenerator {
    rng: ChaCha8Rng,
    n: usize,
    family: UpdateFamily,
    gamma: f64,
}

impl PairGenerator {
    pub fn new(n: usize, seed: u64, family: UpdateFamily, gamma: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
            family,
            gamma,
        }
    }

    fn draw(&mut self) -> DVector<f64> {
        let rng = &mut self.rng;
        DVector::from_fn(self.n, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Next pair acceptable for pushing onto `buf`. Convex families get
    /// `s ← sign(sᵀy)s`; SR1 pairs are redrawn until the safeguard accepts
    /// the buffer that results from the push.
    pub fn next_for(&mut self, buf: &PairBuffer) -> Result<Pair> {
        for _ in 0..MAX_REDRAWS {
            let mut s = self.draw();
            let y = self.draw();
            let sy = s.dot(&y);
            if sy == 0.0 {
                continue;
            }
            if !self.family.is_sr1() && sy < 0.0 {
                s.neg_mut();
            }
            let pair = Pair::from_vectors(s, y)?;
            if self.family.is_sr1() {
                let mut trial = buf.clone();
                trial.push_pair(pair.clone())?;
                if compact::sr1_safeguard(&trial, self.gamma).is_err() {
                    debug!("redrawing pair rejected by the SR1 safeguard");
                    continue;
                }
            }
            return Ok(pair);
        }
        Err(Error::Numerical(format!(
            "no acceptable pair after {MAX_REDRAWS} draws"
        )))
    }
}

/// Buffer of capacity `m` filled with `m` generated pairs.
pub fn generate_random_pairs(
    n: usize,
    m: usize,
    seed: u64,
    family: UpdateFamily,
    gamma: f64,
) -> Result<PairBuffer> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n, m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut generator = PairGenerator::new(n, seed, family, gamma);
    let mut buf = PairBuffer::new(n, m);
    for _ in 0..m {
        let pair = generator.next_for(&buf)?;
        buf.push_pair(pair)?;
    }
    Ok(buf)
}

/// State carried between the experiment steps.
#[derive(Debug, Clone)]
pub struct Session {
    config: ExperimentConfig,
    generator: PairGenerator,
    buf: PairBuffer,
    compact: CompactForm,
    qr: ThinQR,
    step: u8,
}

impl Session {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let generator = PairGenerator::new(config.n, config.seed, config.family, config.gamma);
        let buf = PairBuffer::new(config.n, config.m);
        let compact = compact::build(&buf, config.gamma, config.family)?;
        Ok(Self {
            config,
            generator,
            buf,
            compact,
            qr: ThinQR::empty(),
            step: 0,
        })
    }

    /// Session over an externally supplied buffer, positioned after step 1.
    pub fn from_buffer(
        config: ExperimentConfig,
        buf: PairBuffer,
    ) -> Result<(Self, ExperimentReport)> {
        let generator = PairGenerator::new(buf.dim(), config.seed, config.family, config.gamma);
        let compact = compact::build(
            &PairBuffer::new(buf.dim(), buf.capacity()),
            config.gamma,
            config.family,
        )?;
        let config = ExperimentConfig {
            n: buf.dim(),
            m: buf.capacity(),
            experiment: 1,
            ..config
        };
        let mut session = Self {
            config,
            generator,
            buf,
            compact,
            qr: ThinQR::empty(),
            step: 0,
        };
        let report = session.first_step(false)?;
        Ok((session, report))
    }

    pub fn buffer(&self) -> &PairBuffer {
        &self.buf
    }

    pub fn compact(&self) -> &CompactForm {
        &self.compact
    }

    pub fn qr(&self) -> &ThinQR {
        &self.qr
    }

    /// Runs the next step and reports on it.
    pub fn advance(&mut self) -> Result<ExperimentReport> {
        match self.step {
            0 => self.first_step(true),
            1 | 2 => self.incremental_step(),
            _ => Err(Error::InvalidArgument(
                "all three experiments already ran".into(),
            )),
        }
    }

    fn first_step(&mut self, generate: bool) -> Result<ExperimentReport> {
        if generate {
            for _ in 1..self.config.m {
                let pair = self.generator.next_for(&self.buf)?;
                self.buf.push_pair(pair)?;
            }
        }
        let start = Instant::now();
        self.compact = compact::build(&self.buf, self.config.gamma, self.config.family)?;
        self.qr = ThinQR::from_scratch_owned(self.compact.psi_hat(&self.buf));
        let spec = spectrum::eigenvalues(&self.compact, &self.qr, self.buf.dim())?;
        let t_method = start.elapsed().as_secs_f64();
        self.step = 1;
        self.report(spec, t_method, false, None)
    }

    fn incremental_step(&mut self) -> Result<ExperimentReport> {
        let pair = self.generator.next_for(&self.buf)?;
        let per_pair = self.config.family.columns_per_pair();

        let start = Instant::now();
        let dropped = if self.buf.push_pair(pair)?.is_some() {
            per_pair
        } else {
            0
        };
        self.compact = compact::build(&self.buf, self.config.gamma, self.config.family)?;
        let psi_hat = self.compact.psi_hat(&self.buf);
        let (qr, rebuilt) = self.qr.track_history(dropped, &psi_hat)?;
        self.qr = qr;
        let spec = spectrum::eigenvalues(&self.compact, &self.qr, self.buf.dim())?;
        let t_method = start.elapsed().as_secs_f64();

        let fresh = ThinQR::from_scratch(&psi_hat);
        let fresh_spec = spectrum::eigenvalues(&self.compact, &fresh, self.buf.dim())?.sorted();
        let ours = spec.sorted();
        let gap = oracle::relative_error(&ours, &fresh_spec);

        self.step += 1;
        self.report(spec, t_method, rebuilt, Some(gap))
    }

    fn report(
        &self,
        spec: Spectrum,
        t_method: f64,
        rebuilt: bool,
        incremental_gap: Option<f64>,
    ) -> Result<ExperimentReport> {
        let ours = spec.sorted();
        let (re, t_oracle) = if self.config.uses_oracle() {
            let start = Instant::now();
            let dense = oracle::dense_build(&self.buf, self.config.gamma, self.config.family)?;
            let reference = oracle::dense_eigenvalues(&dense)?;
            let t = start.elapsed().as_secs_f64();
            (Some(oracle::relative_error(&ours, &reference)), Some(t))
        } else {
            (None, None)
        };
        let config = ExperimentConfig {
            experiment: self.step,
            ..self.config
        };
        Ok(ExperimentReport {
            config,
            re,
            incremental_gap,
            t_method,
            t_oracle,
            rebuilt,
            spectrum: ours,
        })
    }
}

/// Runs steps `1..=cfg.experiment` and reports on the last one.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<ExperimentReport> {
    let mut reports = run_through(cfg, cfg.experiment)?;
    Ok(reports.pop().expect("at least one step runs"))
}

/// Runs all three steps on one session, one report per step.
pub fn run_all(cfg: ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    run_through(cfg, 3)
}

fn run_through(cfg: ExperimentConfig, last: u8) -> Result<Vec<ExperimentReport>> {
    let mut session = Session::new(cfg)?;
    (0..last).map(|_| session.advance()).collect()
}

pub const CSV_HEADER: &str = "n,family,phi,experiment,re,t_method,t_oracle";

pub fn csv_row(r: &ExperimentReport) -> String {
    let phi = r
        .config
        .family
        .phi()
        .map_or(String::new(), |p| p.to_string());
    let re = r.re.map_or(String::new(), |v| format!("{v:e}"));
    let t_oracle = r.t_oracle.map_or(String::new(), |v| format!("{v:e}"));
    format!(
        "{},{},{},{},{},{:e},{}",
        r.config.n,
        r.config.family.name(),
        phi,
        r.config.experiment,
        re,
        r.t_method,
        t_oracle
    )
}

pub fn to_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// One block per family: rows are `n`, columns the relative error of each
/// experiment.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let mut families: Vec<UpdateFamily> = Vec::new();
    for r in reports {
        if !families.contains(&r.config.family) {
            families.push(r.config.family);
        }
    }
    let mut out = String::new();
    for family in families {
        let _ = writeln!(out, "{family}");
        let _ = writeln!(
            out,
            "{:>8}  {:>14}  {:>14}  {:>14}",
            "n", "RE exp 1", "RE exp 2", "RE exp 3"
        );
        let mut sizes: Vec<usize> = reports
            .iter()
            .filter(|r| r.config.family == family)
            .map(|r| r.config.n)
            .collect();
        sizes.dedup();
        for n in sizes {
            let mut cells = [String::from("-"), String::from("-"), String::from("-")];
            for r in reports
                .iter()
                .filter(|r| r.config.family == family && r.config.n == n)
            {
                let idx = usize::from(r.config.experiment.clamp(1, 3)) - 1;
                cells[idx] =
                    r.re.map_or_else(|| "skipped".to_string(), |v| format!("{v:.5e}"));
            }
            let _ = writeln!(
                out,
                "{:>8}  {:>14}  {:>14}  {:>14}",
                n, cells[0], cells[1], cells[2]
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [UpdateFamily; 4] = [
        UpdateFamily::Sr1,
        UpdateFamily::Bfgs,
        UpdateFamily::Dfp,
        UpdateFamily::Broyden { phi: 0.5 },
    ];

    #[test]
    fn generator_is_deterministic() {
        let a = generate_random_pairs(30, 4, 7, UpdateFamily::Bfgs, 3.0).unwrap();
        let b = generate_random_pairs(30, 4, 7, UpdateFamily::Bfgs, 3.0).unwrap();
        assert_eq!(a.s_matrix(), b.s_matrix());
        assert_eq!(a.y_matrix(), b.y_matrix());
        let c = generate_random_pairs(30, 4, 8, UpdateFamily::Bfgs, 3.0).unwrap();
        assert_ne!(a.s_matrix(), c.s_matrix());
    }

    #[test]
    fn convex_pairs_have_positive_curvature() {
        for seed in 0..20 {
            let buf = generate_random_pairs(12, 5, seed, UpdateFamily::Dfp, 3.0).unwrap();
            assert!(buf.pairs().all(|p| p.sy() > 0.0));
        }
    }

    #[test]
    fn sr1_keeps_negative_curvature_pairs() {
        let found = (0..20).any(|seed| {
            let buf = generate_random_pairs(12, 5, seed, UpdateFamily::Sr1, 3.0).unwrap();
            let negative = buf.pairs().any(|p| p.sy() < 0.0);
            negative
        });
        assert!(found);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(11, UpdateFamily::Bfgs);
        assert!(cfg.validate().is_err());
        cfg.n = 12;
        assert!(cfg.validate().is_ok());
        cfg.experiment = 4;
        assert!(cfg.validate().is_err());
        let mut neg = ExperimentConfig::new(50, UpdateFamily::Bfgs);
        neg.gamma = -1.0;
        assert!(neg.validate().is_err());
        neg.family = UpdateFamily::Sr1;
        assert!(neg.validate().is_ok());
    }

    #[test]
    fn small_runs_are_accurate() {
        for family in FAMILIES {
            let reports = run_all(ExperimentConfig {
                seed: 11,
                ..ExperimentConfig::new(60, family)
            })
            .unwrap();
            assert_eq!(reports.len(), 3);
            for (k, r) in reports.iter().enumerate() {
                assert_eq!(usize::from(r.config.experiment), k + 1);
                assert!(r.re.unwrap() <= 1e-13, "{family} exp {}: {:?}", k + 1, r.re);
                assert_eq!(r.incremental_gap.is_some(), k > 0);
            }
        }
    }

    #[test]
    fn single_pair_memory_has_degenerate_first_step() {
        let cfg = ExperimentConfig {
            m: 1,
            ..ExperimentConfig::new(10, UpdateFamily::Bfgs)
        };
        let reports = run_all(cfg).unwrap();
        assert_eq!(reports[0].re, Some(0.0));
        assert!(reports[0].spectrum.iter().all(|&v| v == 3.0));
        assert!(reports[2].re.unwrap() <= 1e-13);
    }

    #[test]
    fn oracle_can_be_skipped() {
        let cfg = ExperimentConfig {
            oracle: false,
            experiment: 2,
            ..ExperimentConfig::new(40, UpdateFamily::Sr1)
        };
        let r = run_experiment(cfg).unwrap();
        assert!(r.re.is_none() && r.t_oracle.is_none());
        assert!(r.passes(0.0));
    }

    #[test]
    fn csv_and_table_layout() {
        let reports = run_all(ExperimentConfig::new(
            20,
            UpdateFamily::Broyden { phi: 0.5 },
        ))
        .unwrap();
        let csv = to_csv(&reports);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("20,broyden,0.5,1,"));
        let table = format_table(&reports);
        assert!(table.contains("RE exp 3"));
        assert_eq!(
            table
                .lines()
                .filter(|l| l.trim_start().starts_with("20 "))
                .count(),
            1
        );
    }
}
