use betaweighter::harness::{
    export_report, prepare_split, read_jsonl, run_on_split, ExperimentConfig, Method, Task, JSONL_FILE,
};
use betaweighter::Error;

fn small(method: Method) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.method = method;
    cfg.source_cap = 160;
    cfg.target_train = 100;
    cfg.target_test = 60;
    cfg.hidden = 12;
    cfg.hyper.epochs = 3;
    cfg.hyper.batch_size = 16;
    cfg.hyper.alpha = 1e-3;
    cfg.meta_batch = 16;
    cfg.seed = 21;
    cfg
}

#[test]
fn every_method_produces_contiguous_epochs() {
    let split = prepare_split(&small(Method::None)).unwrap();
    for method in Method::ALL {
        let cfg = small(method);
        let report = run_on_split(&cfg, &split).unwrap();
        assert_eq!(report.epochs.len(), 3, "{method}");
        for (i, rec) in report.epochs.iter().enumerate() {
            assert_eq!(rec.epoch, i);
            assert!(rec.test_loss.is_finite() && rec.test_loss > 0.0);
            // dw starts at zero weight, so its first prune can empty the pool
            assert_eq!(rec.meta_loss.is_some(), method.uses_meta() && rec.batches > 0, "{method}");
        }
        assert!(report.epochs.windows(2).all(|w| w[1].active <= w[0].active));
        assert_eq!(report.final_weights.len(), split.source.len());
    }
}

#[test]
fn baseline_keeps_unit_weights_and_never_prunes() {
    let cfg = small(Method::None);
    let report = run_on_split(&cfg, &prepare_split(&cfg).unwrap()).unwrap();
    for rec in &report.epochs {
        assert_eq!(rec.pruned, 0);
        assert_eq!(rec.active, 480);
        assert_eq!(rec.mean_weight, Some(1.0));
    }
}

#[test]
fn oracle_trains_on_the_target_domain_only() {
    let cfg = small(Method::Oracle);
    let split = prepare_split(&cfg).unwrap();
    let report = run_on_split(&cfg, &split).unwrap();
    let rec = report.epochs.last().unwrap();
    assert_eq!(rec.active, 160);
    assert_eq!(rec.batches, 10);
    for d in &rec.domains {
        let is_target = d.name == split.target_name;
        assert_eq!(d.active, if is_target { 160 } else { 0 });
        assert_eq!(d.mean_weight, Some(if is_target { 1.0 } else { 0.0 }));
        assert_eq!(d.pruned, 0);
    }
}

#[test]
fn equal_seeds_give_identical_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let cfg = small(Method::Bdw);
        let report = run_on_split(&cfg, &prepare_split(&cfg).unwrap()).unwrap();
        let out = dir.path().join(format!("run{run}"));
        export_report(&report, &out).unwrap();
        bytes.push(std::fs::read(out.join(JSONL_FILE)).unwrap());
        assert_eq!(read_jsonl(&out.join(JSONL_FILE)).unwrap(), report.epochs);
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(!bytes[0].is_empty());
}

#[test]
fn unit_weight_bdw_without_outer_updates_matches_the_baseline() {
    let mut bdw = small(Method::Bdw);
    bdw.hyper.eta = 0.0;
    bdw.force_unit_weights = true;
    bdw.prune_enabled = false;
    let split = prepare_split(&bdw).unwrap();
    let a = run_on_split(&bdw, &split).unwrap();
    let b = run_on_split(&small(Method::None), &split).unwrap();
    for (x, y) in a.epochs.iter().zip(&b.epochs) {
        assert_eq!(x.test_loss.to_bits(), y.test_loss.to_bits());
    }
}

#[test]
fn domain_means_average_to_the_global_mean() {
    let mut cfg = small(Method::Bdw);
    cfg.hyper.eta = 3000.0;
    let report = run_on_split(&cfg, &prepare_split(&cfg).unwrap()).unwrap();
    for rec in &report.epochs {
        let total: usize = rec.domains.iter().map(|d| d.count).sum();
        let weighted: f64 = rec.domains.iter().map(|d| d.count as f64 * d.mean_weight.unwrap()).sum();
        assert!((weighted / total as f64 - rec.mean_weight.unwrap()).abs() < 1e-12);
        let active: usize = rec.domains.iter().map(|d| d.active).sum();
        assert_eq!(active, rec.active);
    }
}

#[test]
fn rotation_task_with_episodes_reports_probe_accuracy() {
    let mut cfg = small(Method::Bdw);
    cfg.task = Task::Rotation;
    cfg.meta.ways = 5;
    cfg.meta.shots = 3;
    cfg.meta.queries = 3;
    cfg.hyper.epochs = 2;
    let report = run_on_split(&cfg, &prepare_split(&cfg).unwrap()).unwrap();
    for rec in &report.epochs {
        let acc = rec.test_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(rec.test_loss < 4.0_f64.ln() + 0.5);
    }
}

#[test]
fn infeasible_episodes_fail_before_training() {
    let mut cfg = small(Method::Dw);
    cfg.task = Task::Rotation;
    cfg.meta.ways = 11;
    let err = run_on_split(&cfg, &prepare_split(&cfg).unwrap()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn bdw_costs_more_wall_clock_than_the_baseline() {
    let mut none = small(Method::None);
    none.source_cap = 600;
    let mut bdw = none.clone();
    bdw.method = Method::Bdw;
    bdw.prune_enabled = false;
    let split = prepare_split(&none).unwrap();
    let t_none = run_on_split(&none, &split).unwrap().total_seconds();
    let t_bdw = run_on_split(&bdw, &split).unwrap().total_seconds();
    assert!(t_bdw > t_none, "bdw {t_bdw}s vs none {t_none}s");
}
