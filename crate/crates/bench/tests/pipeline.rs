use amp2_bench::ablation::cell_config;
use amp2_bench::plots::energy_series;
use amp2_bench::{
    emit_plots, run_ablation_grid, run_experiment, Ablation, ExperimentConfig, GridSpec, NetworkTemplate, Split,
};
use amp2_core::network::PointNetOptions;

fn tiny() -> ExperimentConfig {
    let mut net = PointNetOptions {
        stem_widths: vec![6],
        feature_width: 12,
        head_hidden: 0,
        ..Default::default()
    };
    net.blocks.width = 6;
    net.blocks.depth_blocks = 1;
    let mut cfg = ExperimentConfig {
        name: "tiny".into(),
        network: NetworkTemplate::PointNet(net),
        ..Default::default()
    };
    cfg.dataset.classes = 3;
    cfg.dataset.per_class = 10;
    cfg.dataset.n_points = 16;
    cfg.optimizer.epochs = 2;
    cfg.optimizer.batch_size = 8;
    cfg.optimizer.lr = 1e-2;
    cfg.seeds = vec![3];
    cfg
}

#[test]
fn record_carries_metrics_energy_and_rates() {
    let res = run_experiment(&tiny()).unwrap();
    let r = &res.records[0];
    assert_eq!(r.config_hash, tiny().hash());
    assert_eq!(r.metrics.first().map(|m| (m.epoch, m.split)), Some((0, Split::Test)));
    assert_eq!(r.final_test_accuracy, r.test_curve().last().unwrap().1);
    assert!(r.metrics.iter().all(|m| (0.0..=100.0).contains(&m.accuracy) && m.loss.is_finite()));
    let spikes = tiny().resolve_spec().unwrap().spike_layer_count();
    assert_eq!(r.firing_rates.len(), spikes);
    assert_eq!(r.energy.per_layer_firing_rate.len(), spikes);
    assert!(r.block_rates.contains_key("stem") && r.block_rates.contains_key("block1"));
    assert!(r.energy.lif_pj > 0.0);
}

#[test]
fn record_json_round_trips() {
    let r = run_experiment(&tiny()).unwrap().records.remove(0);
    let back: amp2_bench::RunRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert!(back.same_results(&r));
}

#[test]
fn config_hash_tracks_content() {
    let a = tiny();
    let mut b = tiny();
    assert_eq!(a.hash(), b.hash());
    b.optimizer.lr = 2e-2;
    assert_ne!(a.hash(), b.hash());
    let back = ExperimentConfig::from_json(&a.to_json()).unwrap();
    assert_eq!(back.hash(), a.hash());
}

#[test]
fn grid_results_do_not_depend_on_worker_count() {
    let grid: GridSpec = "depth=1;awp=0,1;rmp=1".parse().unwrap();
    let one = run_ablation_grid(&tiny(), &grid, 1).unwrap();
    let two = run_ablation_grid(&tiny(), &grid, 2).unwrap();
    assert_eq!(one.rows.len(), 2);
    for (a, b) in one.rows.iter().zip(&two.rows) {
        assert_eq!(a.accuracies, b.accuracies);
        assert_eq!(a.config_hash, b.config_hash);
    }
    assert!(one.to_markdown().contains("| 1 | ✓ | ✓ |"));
}

#[test]
fn ablation_cells_change_the_network() {
    let base = tiny();
    let full = cell_config(&base, 2, Ablation { awp: true, rmp: true }).unwrap().resolve_spec().unwrap();
    let bare = cell_config(&base, 2, Ablation { awp: false, rmp: false }).unwrap().resolve_spec().unwrap();
    assert_eq!(full.shortcut_count(), 2);
    assert_eq!(bare.shortcut_count(), 0);
    assert_ne!(
        cell_config(&base, 2, Ablation { awp: true, rmp: false }).unwrap().hash(),
        cell_config(&base, 2, Ablation { awp: false, rmp: false }).unwrap().hash()
    );
}

#[test]
fn plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let res = run_experiment(&tiny()).unwrap();
    let files = emit_plots(&res.records, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let svg = std::fs::read_to_string(dir.path().join("accuracy_curves.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let (rows, cross) = energy_series(6).unwrap();
    assert_eq!(rows[0], (1, 4.6, 10.1, 13.8));
    assert_eq!(cross, Some(3));
}
