//! Dispatch of configured jobs to the library.

use std::sync::Arc;

use log::{debug, info};
use monodromy::latalg::{
    free_circle_action, gl2z_conjugacy_invariant, kernel_chain, mapping_torus_check, primitive_section,
    smith_normal_form, verify_rho_invariance, CircleActionSection, RhoFunctional, SublatticeChain,
};
use monodromy::lattice::{detect_lattice_basis, monodromy_with_trajectory, BasisTrajectory, LoopPath};
use monodromy::maslov::{maslov_cycles, MaslovIndex, MaslovVector, SymplecticStructure};
use monodromy::{builtin_system, track_fiber_point, Error, IntMatrix, IntegrableSystem, LatticeBasis, PhasePoint};
use nalgebra::DVector;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{JobConfig, JobKind};
use crate::plot;
use crate::report::{BasisOut, ChainLevelOut, ConjugacyOut, FreeActionOut, Report, Verdict};
use crate::CliError;

/// Random integer combinations checked when a basis is validated.
const BASIS_TRIALS: usize = 4;

/// State shared by the stages of one job.
struct Run<'a> {
    cfg: &'a JobConfig,
    sys: Arc<dyn IntegrableSystem>,
    rng: ChaCha8Rng,
    report: Report,
}

/// Outcome of a stage whose failure is a verdict rather than an error.
enum Stage<T> {
    Done(T),
    Failed,
}

fn module_error(e: Error) -> CliError {
    CliError::Module { module: e.module(), source: e }
}

impl Run<'_> {
    /// Records `pass` or, for verdict failures, `fail`; other errors abort
    /// the job.
    fn stage<T>(&mut self, name: &str, result: monodromy::Result<T>) -> Result<Stage<T>, CliError> {
        match result {
            Ok(v) => {
                self.report.record(name, Verdict::Pass, None);
                Ok(Stage::Done(v))
            }
            Err(e) if e.is_verdict_failure() => {
                info!("{name}: {e}");
                self.report.record(name, Verdict::Fail, Some(e.to_string()));
                Ok(Stage::Failed)
            }
            Err(e) => Err(module_error(e)),
        }
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.report.record(name, Verdict::Skipped, Some(why.into()));
    }

    fn anchor(&self, value: &DVector<f64>) -> Result<PhasePoint, CliError> {
        if let Some(p) = &self.cfg.point {
            if p.len() != self.sys.dim() {
                return Err(CliError::ConfigInvalid(format!(
                    "point has {} coordinates, system dimension is {}",
                    p.len(),
                    self.sys.dim()
                )));
            }
            return Ok(PhasePoint::from_slice(p));
        }
        if value.len() != self.sys.k() {
            return Err(CliError::ConfigInvalid(format!(
                "value has {} components, system has k = {}",
                value.len(),
                self.sys.k()
            )));
        }
        let seed = self.sys.seed_point(value).ok_or_else(|| {
            CliError::ConfigInvalid(format!("no seed point for value {:?}; supply a point", value.as_slice()))
        })?;
        track_fiber_point(self.sys.as_ref(), &seed, value, &self.cfg.tolerances.flow).map_err(module_error)
    }

    fn detect(&mut self, value: &DVector<f64>) -> Result<LatticeBasis, CliError> {
        let p = self.anchor(value)?;
        let tol = self.cfg.tolerances.flow;
        let hints: Option<Vec<DVector<f64>>> =
            self.cfg.hints.as_ref().map(|h| h.iter().map(|v| DVector::from_column_slice(v)).collect());
        let basis = detect_lattice_basis(self.sys.as_ref(), &p, hints.as_deref(), &tol, &self.cfg.tolerances.detect)
            .map_err(module_error)?;
        basis.validate(self.sys.as_ref(), &tol, BASIS_TRIALS, &mut self.rng).map_err(module_error)?;
        debug!("basis at {:?}: {:?}", value.as_slice(), basis.basis.as_slice());
        self.report.record("basis", Verdict::Pass, None);
        self.report.results.basis = Some(BasisOut::from(&basis));
        self.report.diagnostics.max_basis_residual = Some(basis.max_residual());
        Ok(basis)
    }

    fn fibre_value(&self) -> DVector<f64> {
        match (&self.cfg.value, &self.cfg.point) {
            (Some(v), _) => DVector::from_column_slice(v),
            (None, Some(p)) => self.sys.integral_map(&DVector::from_column_slice(p)),
            (None, None) => unreachable!("checked by config validation"),
        }
    }

    fn path(&self) -> LoopPath {
        self.cfg.loop_path.as_ref().expect("checked by config validation").to_path()
    }

    fn monodromy(&mut self, start: &LatticeBasis) -> Result<Stage<(IntMatrix, BasisTrajectory)>, CliError> {
        let path = self.path();
        path.validate(self.sys.as_ref(), f64::INFINITY).map_err(module_error)?;
        let tol = self.cfg.tolerances.flow;
        let result = monodromy_with_trajectory(self.sys.as_ref(), &path, start, &tol);
        let Stage::Done((m, traj)) = self.stage("monodromy", result)? else {
            return Ok(Stage::Failed);
        };
        let d = &mut self.report.diagnostics;
        d.pre_round_residual = Some(m.pre_round_residual);
        d.trajectory_samples = Some(traj.bases.len());
        d.total_substeps = Some(traj.total_substeps());
        d.max_jump_ratio = Some(traj.max_jump_ratio);
        let res = &mut self.report.results;
        res.end_basis = Some(BasisOut::from(traj.end()));
        res.monodromy = Some(m.entries.clone());
        if m.entries.nrows() == 2 {
            let class = gl2z_conjugacy_invariant(&m.entries).map_err(module_error)?;
            res.conjugacy = Some(ConjugacyOut { class: class.class, k: class.k });
        }
        if let Some(dir) = &self.cfg.output.plot_dir {
            let file = plot::write_trajectory(dir, &traj)?;
            self.report.diagnostics.plot_files.push(file);
        }
        Ok(Stage::Done((m.entries, traj)))
    }

    /// Maslov vector of `basis`, or `None` when the stage does not apply.
    fn maslov(&mut self, basis: &LatticeBasis) -> Result<Option<MaslovVector>, CliError> {
        if !self.sys.is_hamiltonian() || self.sys.dim() != 2 * self.sys.n() {
            self.skip("maslov", "system is not Hamiltonian on R^2n");
            return Ok(None);
        }
        let s = SymplecticStructure::standard(self.sys.n());
        let tol = self.cfg.tolerances.flow;
        let cycles = maslov_cycles(self.sys.as_ref(), basis, &s, &self.cfg.tolerances.maslov, &tol);
        let Stage::Done(cycles) = self.stage("maslov", cycles)? else {
            return Ok(None);
        };
        let mv = MaslovVector::from_cycles(basis, &cycles);
        self.report.results.maslov_vector = Some(mv.indices.clone());
        self.report.diagnostics.winding_residuals = Some(mv.winding_residuals.clone());
        self.report.diagnostics.maslov_samples = Some(mv.sample_counts.clone());
        self.plot_cycles(&cycles)?;
        Ok(Some(mv))
    }

    fn plot_cycles(&mut self, cycles: &[MaslovIndex]) -> Result<(), CliError> {
        if let Some(dir) = &self.cfg.output.plot_dir {
            for (i, c) in cycles.iter().enumerate() {
                let file = plot::write_phase(dir, i + 1, c)?;
                self.report.diagnostics.plot_files.push(file);
            }
        }
        Ok(())
    }

    /// Kernel chain of `rho` and the section generated by its deepest
    /// nonzero kernel.
    fn chain_and_section(&mut self, rho: &RhoFunctional) -> Result<Option<CircleActionSection>, CliError> {
        let chain: SublatticeChain = kernel_chain(rho).map_err(module_error)?;
        let certified =
            chain.levels.iter().all(|l| l.saturated && (l.certificate == 1.into() || l.certificate == (-1).into()));
        self.report.results.kernel_chain = Some(chain.levels.iter().map(ChainLevelOut::from).collect());
        if certified {
            self.report.record("kernel_chain", Verdict::Pass, None);
        } else {
            self.report.record("kernel_chain", Verdict::Fail, Some("uncertified level".into()));
        }
        let Some(level) = chain.levels.iter().rev().find(|l| l.kernel.ncols() > 0) else {
            self.skip("section", "the kernel chain ends in the zero lattice");
            return Ok(None);
        };
        let section = primitive_section(&level.kernel.column(0)).map_err(module_error)?;
        self.report.results.section = Some(section.vector.iter().map(ToString::to_string).collect());
        self.report.record("section", Verdict::Pass, None);
        Ok(Some(section))
    }

    fn free_action(&mut self, basis: &LatticeBasis, section: &CircleActionSection) -> Result<(), CliError> {
        let tol = self.cfg.tolerances.flow;
        let opts = self.cfg.tolerances.free_action;
        let r = free_circle_action(self.sys.as_ref(), basis, section, &tol, &opts, &mut self.rng);
        if let Stage::Done(r) = self.stage("free_action", r)? {
            self.report.results.free_action = Some(FreeActionOut::from(&r));
        }
        Ok(())
    }

    fn mapping_torus(&mut self, m: &IntMatrix, traj: &BasisTrajectory) -> Result<(), CliError> {
        let samples = self.cfg.tolerances.mapping_torus_samples;
        let r = mapping_torus_check(m, traj, samples, &mut self.rng);
        if let Stage::Done(r) = self.stage("mapping_torus", r)? {
            self.report.results.mapping_torus = Some(r);
        }
        Ok(())
    }

    fn configured_rho(&self, n: usize) -> Result<Option<RhoFunctional>, CliError> {
        let Some(rows) = &self.cfg.rho else { return Ok(None) };
        if rows.iter().any(|r| r.len() != n) {
            return Err(CliError::ConfigInvalid(format!("rho rows must have {n} entries")));
        }
        Ok(Some(RhoFunctional::new(IntMatrix::from_rows(rows))))
    }

    fn periods(&mut self) -> Result<(), CliError> {
        let v = self.fibre_value();
        self.detect(&v)?;
        Ok(())
    }

    fn maslov_job(&mut self) -> Result<(), CliError> {
        let v = self.fibre_value();
        let b = self.detect(&v)?;
        self.maslov(&b)?;
        Ok(())
    }

    fn s1_action(&mut self) -> Result<(), CliError> {
        let v = self.fibre_value();
        let b = self.detect(&v)?;
        let section = match (&self.cfg.section, self.configured_rho(b.n())?) {
            (Some(s), _) => {
                if s.len() != b.n() {
                    return Err(CliError::ConfigInvalid(format!("section must have {} entries", b.n())));
                }
                let s = CircleActionSection::from_i64(s).map_err(module_error)?;
                self.report.results.section = Some(s.vector.iter().map(ToString::to_string).collect());
                Some(s)
            }
            (None, Some(rho)) => {
                self.report.results.rho = Some(rho.rows.clone());
                self.report.results.rho_source = Some("config".into());
                self.chain_and_section(&rho)?
            }
            (None, None) => match self.maslov(&b)? {
                Some(mv) => {
                    let rho = RhoFunctional::new(mv.as_row());
                    self.report.results.rho = Some(rho.rows.clone());
                    self.report.results.rho_source = Some("maslov".into());
                    self.chain_and_section(&rho)?
                }
                None => {
                    self.skip("section", "no section, functional or Maslov vector available");
                    None
                }
            },
        };
        match section {
            Some(s) => self.free_action(&b, &s)?,
            None => self.skip("free_action", "no section"),
        }
        Ok(())
    }

    fn monodromy_job(&mut self, torus: bool) -> Result<(), CliError> {
        let path = self.path();
        let b = self.detect(path.start())?;
        match self.monodromy(&b)? {
            Stage::Done((m, traj)) if torus => self.mapping_torus(&m, &traj)?,
            Stage::Done(_) => {}
            Stage::Failed if torus => self.skip("mapping_torus", "monodromy failed"),
            Stage::Failed => {}
        }
        Ok(())
    }

    fn full_verify(&mut self) -> Result<(), CliError> {
        let path = self.path();
        let b = self.detect(path.start())?;
        let mono = match self.monodromy(&b)? {
            Stage::Done(v) => Some(v),
            Stage::Failed => None,
        };
        let mv = self.maslov(&b)?;
        let rho = match (self.configured_rho(b.n())?, &mv, &mono) {
            (Some(r), _, _) => Some((r, "config")),
            (None, Some(mv), _) => Some((RhoFunctional::new(mv.as_row()), "maslov")),
            (None, None, Some((m, _))) => fixed_functional(m).map(|r| (r, "monodromy-fixed")),
            (None, None, None) => None,
        };
        let section = match rho {
            Some((rho, source)) => {
                self.report.results.rho = Some(rho.rows.clone());
                self.report.results.rho_source = Some(source.into());
                match &mono {
                    Some((m, _)) => {
                        let r = verify_rho_invariance(&rho, m).map_err(module_error)?;
                        self.report.results.rho_invariant = Some(r.pass);
                        if r.pass {
                            self.report.record("rho_invariance", Verdict::Pass, None);
                        } else {
                            let rows: Vec<usize> = r.violations.iter().map(|v| v.0).collect();
                            self.report.record(
                                "rho_invariance",
                                Verdict::Fail,
                                Some(format!("rows {rows:?} are not fixed by the monodromy")),
                            );
                        }
                    }
                    None => self.skip("rho_invariance", "monodromy failed"),
                }
                self.chain_and_section(&rho)?
            }
            None => {
                for stage in ["rho_invariance", "kernel_chain", "section"] {
                    self.skip(stage, "no invariant functional available");
                }
                None
            }
        };
        match section {
            Some(s) => self.free_action(&b, &s)?,
            None => self.skip("free_action", "no section"),
        }
        match &mono {
            Some((m, traj)) => self.mapping_torus(m, traj)?,
            None => self.skip("mapping_torus", "monodromy failed"),
        }
        Ok(())
    }
}

/// Primitive integer functionals fixed by `m` (`rho m = rho`), one per
/// row, or `None` when only zero is fixed.
fn fixed_functional(m: &IntMatrix) -> Option<RhoFunctional> {
    let n = m.nrows();
    let mut a = m.transpose();
    for i in 0..n {
        a[(i, i)] -= 1;
    }
    // Kernel of (M - I)^T: columns of V beyond the rank in U A V = D.
    let snf = smith_normal_form(&a);
    let r = snf.rank();
    if r == n {
        return None;
    }
    let rows: Vec<Vec<num_bigint::BigInt>> = (r..n)
        .map(|j| {
            let mut v = snf.v.column(j);
            monodromy::latalg::normalize_sign(&mut v);
            v
        })
        .filter(|v| v.iter().any(|x| !x.is_zero()))
        .collect();
    Some(RhoFunctional::new(IntMatrix::from_big_rows(rows)))
}

/// Runs one job; the returned report's verdicts decide the exit status.
pub fn run_job(cfg: &JobConfig) -> Result<Report, CliError> {
    let sys = builtin_system(&cfg.system.name, &cfg.system.params).map_err(module_error)?;
    let mut run = Run { cfg, sys, rng: ChaCha8Rng::seed_from_u64(cfg.seed), report: Report::new(cfg) };
    info!("{} on {}", cfg.job.name(), cfg.system.name);
    match cfg.job {
        JobKind::Periods | JobKind::Refine => run.periods()?,
        JobKind::Maslov => run.maslov_job()?,
        JobKind::S1Action => run.s1_action()?,
        JobKind::Monodromy => run.monodromy_job(false)?,
        JobKind::MappingTorusCheck => run.monodromy_job(true)?,
        JobKind::FullVerify => run.full_verify()?,
    }
    Ok(run.report)
}
