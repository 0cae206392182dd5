//! A user-registered experiment goes through the same run and rerun path as the built-ins.

use weakcoupling::report::ExperimentReport;
use weakcoupling_cli::{rerun, resolve_config, run, CliError, ExecOptions, Experiment, ExperimentConfig, Registry};

struct Squares;

impl Experiment for Squares {
    fn name(&self) -> &str {
        "squares"
    }

    fn description(&self) -> &str {
        "eps and eps squared along the ladder"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>, CliError> {
        let mut r = ExperimentReport::new("squares", &["eps", "eps2"]);
        for &e in &cfg.eps_ladder {
            r.push_row(vec![e, e * e]);
        }
        r.check("rows match the ladder", r.rows.len() == cfg.eps_ladder.len(), "");
        Ok(vec![r])
    }
}

#[test]
fn registered_experiment_lists_runs_and_reruns() {
    let mut reg = Registry::with_builtins();
    reg.register(Box::new(Squares)).unwrap();
    assert_eq!(reg.len(), 7);
    assert_eq!(reg.list_text().lines().count(), 7);

    let dir = tempfile::tempdir().unwrap();
    let cfg = resolve_config(&reg, "squares", None, &["eps_ladder=[0.5, 0.25, 0.125]".into()]).unwrap();
    let out = run(&reg, &cfg, &ExecOptions::serial_in(dir.path())).unwrap();
    assert!(out.passed());
    let csv = std::fs::read_to_string(out.dir.join("squares.csv")).unwrap();
    assert_eq!(csv, "eps,eps2\n5e-1,2.5e-1\n2.5e-1,6.25e-2\n1.25e-1,1.5625e-2\n");

    let again = rerun(&reg, &out.dir.join("manifest.json"), &ExecOptions::default()).unwrap();
    assert!(again.identical());
    assert!(again.outcome.dir.starts_with(&out.dir));

    // without the plugin the manifest cannot be replayed
    let plain = Registry::with_builtins();
    assert!(matches!(rerun(&plain, &out.dir.join("manifest.json"), &ExecOptions::default()), Err(CliError::Usage { .. })));
}
