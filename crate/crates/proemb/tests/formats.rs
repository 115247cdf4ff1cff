use proemb::formats::{self, Checkpoint, ProxyFormat, Sidecar, TableFormat};
use proemb_core::estimators::EstimateReport;
use proemb_core::experiment::{
    fit_embedding, generate_panel, run_experiment, BaseKind, ExperimentConfig, GraphKind, Method,
    MethodSummary, RmseTable, RunDigest,
};
use proemb_core::graphgen::GraphModel;
use proemb_core::neural::{Activation, DenseNet};
use proemb_core::numerics::RngStream;
use proptest::prelude::*;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        n: 80,
        d: 4,
        vocab: 50,
        doc_len: 15,
        epochs: 2,
        runs: 2,
        ..ExperimentConfig::default()
    }
}

#[test]
fn panel_directory_round_trips_in_both_layouts() {
    for graph in [GraphKind::Network, GraphKind::Dyads] {
        let config = ExperimentConfig { graph, ..small() };
        let panel = generate_panel(&config, 1).unwrap();
        for format in [ProxyFormat::Dense, ProxyFormat::Sparse] {
            let dir = tempfile::tempdir().unwrap();
            formats::write_panel_dir(dir.path(), &panel, format).unwrap();
            let back = formats::read_panel_dir(dir.path(), &config).unwrap();
            assert_eq!(back.digest(), panel.digest(), "{graph:?} {format:?}");
            assert_eq!(back.outcomes.y_fact, panel.outcomes.y_fact);
            assert_eq!(back.proxies.zngb, panel.proxies.zngb);
        }
    }
}

#[test]
fn edge_list_layout() {
    let panel = generate_panel(&small(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.csv");
    formats::write_edges(&path, &panel.graph).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("src,dst"));
    let mut count = 0;
    for line in lines {
        let (a, b) = line.split_once(',').unwrap();
        assert!(a.parse::<usize>().unwrap() < b.parse::<usize>().unwrap());
        count += 1;
    }
    assert_eq!(count, panel.graph.edge_count());

    std::fs::write(&path, "src,dst\n3,1\n").unwrap();
    assert!(formats::read_edges(&path, 5, GraphModel::Dyadic).is_err());
    std::fs::write(&path, "src,dst\n1,9\n").unwrap();
    assert!(formats::read_edges(&path, 5, GraphModel::Dyadic).is_err());
}

#[test]
fn panel_records_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.jsonl");
    std::fs::write(&path, "{\"node\":1,\"y_prev\":0,\"treat\":1,\"y_fact\":0.5,\"y_cf\":-0.5}\n").unwrap();
    assert!(formats::read_outcomes(&path, 1.0, 0.2).is_err());
    std::fs::write(&path, "{\"node\":0,\"y_prev\":2,\"treat\":1,\"y_fact\":0.5,\"y_cf\":-0.5}\n").unwrap();
    assert!(formats::read_outcomes(&path, 1.0, 0.2).is_err());
    std::fs::write(&path, "{\"node\":0,\"y_prev\":1,\"treat\":1,\"y_fact\":0.5,\"y_cf\":-0.5}\n\n").unwrap();
    let out = formats::read_outcomes(&path, 1.0, 0.2).unwrap();
    assert_eq!((out.n(), out.y_cf[0]), (1, -0.5));
}

#[test]
fn checkpoint_round_trips_bit_exactly() {
    let config = small();
    let panel = generate_panel(&config, 0).unwrap();
    let emb = fit_embedding(&config, &panel, 0, 3).unwrap();
    let ckpt = Checkpoint {
        model: emb.model.clone(),
        standardizer: emb.standardizer.clone(),
    };
    let sidecar = Sidecar {
        d: 3,
        vocab: config.vocab,
        lambda_rb: config.lambda_rb,
        epochs: config.epochs,
        seed: config.seed,
        loss_trace: emb.report.trace.clone(),
    };
    let dir = tempfile::tempdir().unwrap();
    formats::save_checkpoint(dir.path(), &ckpt, &sidecar).unwrap();
    let (back, meta) = formats::load_checkpoint(dir.path()).unwrap();
    assert_eq!(meta, sidecar);
    assert_eq!(formats::to_json(&back), formats::to_json(&ckpt));
    let x = back.standardizer.apply(&panel.proxies.ztilde_sparse()).unwrap();
    let mu = back.model.embed(&x).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(mu.data()), bits(emb.mu.data()));

    let meta_text = std::fs::read_to_string(dir.path().join(formats::SIDECAR_FILE)).unwrap();
    for key in ["\"d\"", "\"V\"", "\"lambda_rb\"", "\"epochs\"", "\"seed\"", "\"loss_trace\""] {
        assert!(meta_text.contains(key), "{key}");
    }
    let wrong = Sidecar { d: 4, ..sidecar };
    formats::write_json(&dir.path().join(formats::SIDECAR_FILE), &wrong).unwrap();
    assert!(formats::load_checkpoint(dir.path()).is_err());
}

#[test]
fn malformed_networks_are_rejected() {
    let net = DenseNet::init(&[3, 4, 2], Activation::Relu, Activation::Linear, &mut RngStream::new(0, 0)).unwrap();
    let text = formats::to_json(&net);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let broken = text.replacen("\"rows\": 4", "\"rows\": 5", 1);
    std::fs::write(&path, broken).unwrap();
    assert!(formats::load_net(&path).is_err());
}

#[test]
fn estimate_report_files() {
    let mut report = EstimateReport::scalar("t-gb", 0.9, 3, 7);
    report.ite = vec![0.5, 1.0, 1.2];
    report.base_learner = Some("gb".into());
    let dir = tempfile::tempdir().unwrap();
    formats::write_estimate(dir.path(), &report).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    for key in ["method", "ace_hat", "seed", "n", "d_or_V", "base_learner", "config_digest"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let ite = std::fs::read_to_string(dir.path().join("ite.csv")).unwrap();
    assert_eq!(ite, "node,ite\n0,0.5\n1,1\n2,1.2\n");
}

#[test]
fn experiment_tables_round_trip_and_render() {
    let config = ExperimentConfig {
        methods: vec![Method::Oracle, Method::Zero, Method::Tsls, Method::ProEmb(BaseKind::Lr)],
        ..small()
    };
    let table = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = formats::write_table_set(dir.path(), &table).unwrap();
    assert_eq!(paths.len(), 3);
    let json = std::fs::read_to_string(dir.path().join("table.json")).unwrap();
    let back = formats::read_table(&dir.path().join("table.json")).unwrap();
    assert_eq!(back, table);
    assert_eq!(formats::render_table(&back, TableFormat::Json), json);

    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + config.methods.len());
    let md = std::fs::read_to_string(dir.path().join("table.md")).unwrap();
    assert!(md.lines().all(|l| l.matches('|').count() == 4 + table.settings.len() + 1));
    assert!(md.contains("| oracle |"));
}

fn arb_table() -> impl Strategy<Value = RmseTable> {
    let est = proptest::collection::vec(proptest::option::of(-1e6f64..1e6), 1..6);
    (
        -5.0f64..5.0,
        proptest::collection::vec(est, 1..5),
        any::<u64>(),
    )
        .prop_map(|(tau, columns, digest)| {
            let settings: Vec<String> = (0..columns.len()).map(|i| format!("s{i}")).collect();
            let methods = [Method::Tsls, Method::TLearner(BaseKind::Mlp), Method::ProEmb(BaseKind::Gb)];
            let mut rows = Vec::new();
            for m in methods {
                for (s, e) in settings.iter().zip(&columns) {
                    let e: Vec<Option<f64>> = e.iter().map(|v| v.map(|x| x / 3.0)).collect();
                    rows.push(MethodSummary::from_estimates(m, s, tau, e));
                }
            }
            RmseTable {
                tau,
                digests: vec![RunDigest {
                    setting: settings[0].clone(),
                    run: 0,
                    digest: format!("{digest:016x}"),
                }],
                settings,
                rows,
                config_digest: format!("{:016x}", digest.rotate_left(7)),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_json_round_trip_is_byte_identical(table in arb_table()) {
        let json = formats::render_table(&table, TableFormat::Json);
        let back: RmseTable = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(formats::render_table(&back, TableFormat::Json), json);
        let csv = formats::render_table(&table, TableFormat::Csv);
        prop_assert_eq!(csv.lines().count(), 1 + table.rows.len());
        let md = formats::render_table(&table, TableFormat::Markdown);
        for line in md.lines() {
            prop_assert_eq!(line.replace("\\|", "").matches('|').count() - 1, 4 + table.settings.len());
        }
    }

    #[test]
    fn networks_round_trip_bit_exactly(seed in any::<u64>(), scale in prop_oneof![Just(1e-310), Just(1.0), Just(1e300)]) {
        let mut net = DenseNet::init(&[4, 3, 2], Activation::Relu, Activation::Sigmoid, &mut RngStream::new(seed, 0)).unwrap();
        for layer in net.layers_mut() {
            for w in layer.w.data_mut() {
                *w *= scale;
            }
            layer.b[0] = -scale / 7.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        formats::save_net(&path, &net).unwrap();
        let back = formats::load_net(&path).unwrap();
        for (a, b) in net.layers().iter().zip(back.layers()) {
            prop_assert_eq!(a.activation, b.activation);
            prop_assert_eq!(a.w.shape(), b.w.shape());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a.w.data()), bits(b.w.data()));
            prop_assert_eq!(bits(&a.b), bits(&b.b));
        }
    }
}
