//! End-to-end acceptance gate. Each test prints exactly one pass/fail line
//! for its criterion, with the measured value and wall-clock time.

use std::time::Instant;

use smms_lab::report::{run_experiment, ExperimentConfig};

fn cfg(experiment: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!("experiment = \"{experiment}\"\n{extra}")).unwrap()
}

struct Gate {
    label: &'static str,
    start: Instant,
    budget_secs: f64,
}

impl Gate {
    fn new(label: &'static str, budget_secs: f64) -> Self {
        Gate {
            label,
            start: Instant::now(),
            budget_secs,
        }
    }

    fn finish(self, pass: bool, detail: &str) {
        let secs = self.start.elapsed().as_secs_f64();
        let verdict = if pass && secs <= self.budget_secs {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "acceptance {}: {verdict} ({detail}; {secs:.1}s of {:.0}s budget)",
            self.label, self.budget_secs
        );
        assert!(pass, "{}: {detail}", self.label);
        assert!(
            secs <= self.budget_secs,
            "{}: exceeded time budget ({secs:.1}s > {:.0}s)",
            self.label,
            self.budget_secs
        );
    }
}

fn rows_pass(report: &smms_lab::report::Report, prefix: &str) -> (bool, String) {
    let rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.name.starts_with(prefix))
        .collect();
    assert!(!rows.is_empty(), "no rows match prefix '{prefix}'");
    let worst = rows
        .iter()
        .map(|r| r.value / r.tolerance.max(1e-300))
        .fold(0.0f64, f64::max);
    (
        rows.iter().all(|r| r.pass),
        format!("{} rows, worst value/tolerance {worst:.3e}", rows.len()),
    )
}

#[test]
fn criterion_01_conformal_curvature_identity() {
    let gate = Gate::new("01 conformal curvature identity", 10.0);
    let report = run_experiment(&cfg("curvature-identities", "")).unwrap();
    let (pass, detail) = rows_pass(&report, "conformal-identity");
    gate.finish(pass, &detail);
}

#[test]
fn criterion_02_warped_curvature_comparison() {
    let gate = Gate::new("02 warped curvature comparison", 30.0);
    let report = run_experiment(&cfg("curvature-identities", "")).unwrap();
    let (spass, sdetail) = rows_pass(&report, "warped-scalar");
    let (rpass, rdetail) = rows_pass(&report, "warped-ricci");
    gate.finish(spass && rpass, &format!("{sdetail}; {rdetail}"));
}

#[test]
fn criterion_03_mass_regression() {
    let gate = Gate::new("03 mass regression", 60.0);
    let report = run_experiment(&cfg("mass-suite", "")).unwrap();
    let schw = report
        .rows
        .iter()
        .find(|r| r.name == "schwarzschild-mass-relative-error")
        .unwrap();
    let eucl = report
        .rows
        .iter()
        .find(|r| r.name == "euclidean-mass")
        .unwrap();
    gate.finish(
        schw.pass && eucl.pass,
        &format!(
            "relative error {:.3e} (tol 5e-3), flat mass {:.3e} (tol 1e-8)",
            schw.value, eucl.value
        ),
    );
}

#[test]
fn criterion_04_mass_identities() {
    let gate = Gate::new("04 weighted mass identities", 300.0);
    let report = run_experiment(&cfg("mass-suite", "")).unwrap();
    let (lpass, ldetail) = rows_pass(&report, "weighted-vs-conformal-mass");
    let (mpass, mdetail) = rows_pass(&report, "smms-mass");
    gate.finish(lpass && mpass, &format!("{ldetail}; {mdetail}"));
}

#[test]
fn criterion_05_clifford_algebra() {
    let gate = Gate::new("05 Clifford algebra suite", 30.0);
    let report = run_experiment(&cfg("clifford-suite", "")).unwrap();
    let pass = report.passed;
    let (_, gdetail) = rows_pass(&report, "gamma-relations");
    let (_, wdetail) = rows_pass(&report, "warped-action-square");
    let (_, adetail) = rows_pass(&report, "averaged-product-metric");
    gate.finish(pass, &format!("{gdetail}; {wdetail}; {adetail}"));
}

#[test]
fn criterion_06_warped_dirac_factorization() {
    let gate = Gate::new("06 warped Dirac factorization", 120.0);
    let report = run_experiment(&cfg("warped-dirac", "")).unwrap();
    let (dpass, ddetail) = rows_pass(&report, "warped-dirac");
    let (vpass, vdetail) = rows_pass(&report, "vertical-norm");
    gate.finish(dpass && vpass, &format!("{ddetail}; {vdetail}"));
}

#[test]
fn criterion_07_weighted_lichnerowicz() {
    let gate = Gate::new("07 weighted Lichnerowicz on tori", 120.0);
    let report = run_experiment(&cfg("torus-identities", "[grid]\nsize = 32")).unwrap();
    let (lpass, ldetail) = rows_pass(&report, "lichnerowicz");
    let (rpass, rdetail) = rows_pass(&report, "ricci-identity");
    gate.finish(lpass && rpass, &format!("{ldetail}; {rdetail}"));
}

#[test]
fn criterion_08_spectra_and_kernels() {
    let gate = Gate::new("08 spectra and harmonic spinors", 300.0);
    let report = run_experiment(&cfg("spectra", "")).unwrap();
    let (spass, sdetail) = rows_pass(&report, "spectra-equal");
    let (kpass, kdetail) = rows_pass(&report, "kernel-dimension");
    let (cpass, cdetail) = rows_pass(&report, "curved-kernel-invariance");
    gate.finish(
        spass && kpass && cpass,
        &format!("{sdetail}; {kdetail}; {cdetail}"),
    );
}

#[test]
fn criterion_09_mu_interpolation_and_negative_m() {
    let gate = Gate::new("09 mu interpolation and negative m", 600.0);
    let report = run_experiment(&cfg("mu-interpolation", "[grid]\nsize = 32")).unwrap();
    let mu_pass = report.passed;
    let neg = run_experiment(&cfg("negative-m", "[grid]\nsize = 32")).unwrap();
    let (npass, ndetail) = rows_pass(&neg, "negative-m-bound");
    let flat = report.rows.iter().find(|r| r.name == "flat-mu").unwrap();
    gate.finish(
        mu_pass && npass && neg.passed,
        &format!(
            "flat mu {:.3e}; monotone + endpoints + slack rows all pass: {mu_pass}; {ndetail}",
            flat.value
        ),
    );
}

#[test]
fn criterion_10_deterministic_reports() {
    let gate = Gate::new("10 deterministic reports", 120.0);
    let bin = env!("CARGO_BIN_EXE_smms-lab");
    let dir = std::env::temp_dir().join(format!("smms-acceptance-{}", std::process::id()));
    let config = dir.join("exp.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&config, "experiment = \"clifford-suite\"\nseed = 11\n").unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args(["run"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("clifford-suite.json")).unwrap());
    }
    let identical = outputs[0] == outputs[1];
    std::fs::remove_dir_all(&dir).ok();
    gate.finish(
        identical,
        &format!("two runs, {} bytes each", outputs[0].len()),
    );
}
