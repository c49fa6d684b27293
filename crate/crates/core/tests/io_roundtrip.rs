use netspill::io::{
    build_threshold_network, ingest_panel_reader, interpolate_series, nearest_rank_percentile,
    read_edges_reader, read_weights_reader, simulated_labels, threshold_edges, write_edges_csv,
    write_panel_csv, WeightedPair,
};
use netspill::{simulate_panel, Error, Group, NetworkStack, SimulationConfig, TrueParams, UnitId};

fn export(cfg: &SimulationConfig, base: i64) -> (netspill::simulate::DgpDraw, Vec<u8>, Vec<u8>) {
    let draw = simulate_panel(cfg).unwrap();
    let (units, clusters) = simulated_labels(&draw.data);
    let mut panel = Vec::new();
    write_panel_csv(&mut panel, &draw.data, &units, &clusters, base).unwrap();
    let mut edges = Vec::new();
    write_edges_csv(&mut edges, &draw.nets, &units, base).unwrap();
    (draw, panel, edges)
}

fn parse_line(err: Error) -> u64 {
    match err.root() {
        Error::Parse { line, .. } => *line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn exported_draws_ingest_to_the_same_dataset_and_stack() {
    for (n, clusters_total, base) in [(30, 10, 0), (40, 40, 2001)] {
        let mut cfg = SimulationConfig::new(n, 4, 2, TrueParams::common(0.5));
        cfg.clusters_total = clusters_total;
        cfg.seed = 8;
        let (draw, panel_csv, edges_csv) = export(&cfg, base);
        let ingested = ingest_panel_reader(panel_csv.as_slice(), 3).unwrap();
        assert_eq!(ingested.period_base, base);
        assert!(ingested.dropped_units.is_empty());
        let data = &ingested.data;
        let index = ingested.unit_index();
        let (labels, _) = simulated_labels(&draw.data);
        assert_eq!(data.n_units(), draw.data.n_units());
        for (i, label) in labels.iter().enumerate() {
            let j = index[label.as_str()].0;
            assert_eq!(data.partition().group_of(UnitId(j)), draw.data.partition().group_of(UnitId(i)));
            for t in 0..=cfg.horizon {
                assert_eq!(data.y(j, t).to_bits(), draw.data.y(i, t).to_bits());
            }
            for t in 1..=cfg.horizon {
                assert_eq!(data.x(j, t), draw.data.x(i, t));
            }
            for (k, other) in labels.iter().enumerate() {
                let l = index[other.as_str()].0;
                let same_before = draw.data.clusters().cluster_of(UnitId(i)) == draw.data.clusters().cluster_of(UnitId(k));
                let same_after = data.clusters().cluster_of(UnitId(j)) == data.clusters().cluster_of(UnitId(l));
                assert_eq!(same_before, same_after);
            }
        }

        let edges = read_edges_reader(edges_csv.as_slice(), &ingested).unwrap();
        assert_eq!(edges.n_layers, 1);
        assert_eq!(edges.skipped, 0);
        let stack = NetworkStack::from_edges(data.partition(), 1, cfg.horizon, &edges.edges).unwrap();
        let mut got: Vec<(String, String)> = stack
            .edges()
            .iter()
            .map(|e| (ingested.unit_labels[e.src.0].clone(), ingested.unit_labels[e.dst.0].clone()))
            .collect();
        let mut want: Vec<(String, String)> = draw
            .nets
            .edges()
            .iter()
            .map(|e| (labels[e.src.0].clone(), labels[e.dst.0].clone()))
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert!(stack.is_static());
    }
}

#[test]
fn identical_labels_give_an_identical_dataset() {
    let cfg = SimulationConfig::new(20, 3, 1, TrueParams::common(1.0));
    let (draw, panel_csv, _) = export(&cfg, 0);
    let ingested = ingest_panel_reader(panel_csv.as_slice(), 0).unwrap();
    assert_eq!(ingested.data, draw.data);
}

const HEADER: &str = "unit,period,y,x1,group,cluster\n";

fn panel_text(rows: &[&str]) -> String {
    let mut s = HEADER.to_string();
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

fn tiny_rows() -> Vec<String> {
    let mut rows = Vec::new();
    for (u, g, c) in [("a", "B", "c1"), ("b", "B", "c1"), ("c", "F", "c2"), ("d", "F", "c2")] {
        for t in 0..4 {
            let x = if t == 0 { String::new() } else { format!("{}", t as f64 * 0.5) };
            rows.push(format!("{u},{t},{}.25,{x},{g},{c}", t + 1));
        }
    }
    rows
}

#[test]
fn parse_errors_report_the_offending_line() {
    let mut rows = tiny_rows();
    rows[5] = "b,1,abc,1.0,B,c1".into();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(parse_line(ingest_panel_reader(text.as_bytes(), 3).unwrap_err()), 7);

    let bad_header = "unit,time,y,x1,group,cluster\na,0,1,,B,c\n";
    assert_eq!(parse_line(ingest_panel_reader(bad_header.as_bytes(), 3).unwrap_err()), 1);

    let mut rows = tiny_rows();
    rows[2] = "a,2,1.0,1.0,F,c1".into();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(parse_line(ingest_panel_reader(text.as_bytes(), 3).unwrap_err()), 4);

    let mut rows = tiny_rows();
    rows[3] = "a,2,1.0,1.0,B,c1".into();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(ingest_panel_reader(text.as_bytes(), 3).is_err());
}

#[test]
fn short_gaps_are_interpolated_and_long_gaps_drop_the_unit() {
    let mut rows = tiny_rows();
    rows[1] = "a,1,NA,0.5,B,c1".into();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    let panel = ingest_panel_reader(text.as_bytes(), 1).unwrap();
    let a = panel.unit_index()["a"].0;
    assert_eq!(panel.data.y(a, 1), 2.25);

    let mut rows = tiny_rows();
    rows[1] = "a,1,,0.5,B,c1".into();
    rows[2] = "a,2,,1.0,B,c1".into();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    let panel = ingest_panel_reader(text.as_bytes(), 1).unwrap();
    assert_eq!(panel.dropped_units, vec!["a".to_string()]);
    assert_eq!(panel.data.n_units(), 3);
}

#[test]
fn interpolation_fills_interior_runs_only() {
    let mut v = vec![Some(1.0), None, None, Some(4.0), None];
    assert!(!interpolate_series(&mut v, 2));
    assert_eq!(&v[..4], &[Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
    let mut v = vec![Some(1.0), None, None, Some(4.0)];
    assert!(!interpolate_series(&mut v, 1));
}

#[test]
fn edge_files_resolve_labels_and_reject_unknown_units() {
    let rows = tiny_rows();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    let panel = ingest_panel_reader(text.as_bytes(), 3).unwrap();
    let edges = "layer,period,src,dst\n1,*,a,c\n2,1,c,a\n";
    let list = read_edges_reader(edges.as_bytes(), &panel).unwrap();
    assert_eq!(list.n_layers, 2);
    assert_eq!(list.edges.len(), 2);
    assert_eq!(list.edges[0].period, None);
    assert_eq!(list.edges[1].period, Some(1));
    assert_eq!(list.edges[1].layer, 1);

    let unknown = "layer,period,src,dst\n1,*,a,c\n1,*,zz,c\n";
    assert_eq!(parse_line(read_edges_reader(unknown.as_bytes(), &panel).unwrap_err()), 3);
    let late = "layer,period,src,dst\n1,3,a,c\n";
    assert!(read_edges_reader(late.as_bytes(), &panel).is_err());
}

#[test]
fn percentile_uses_nearest_rank() {
    let values = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(nearest_rank_percentile(&values, 50.0).unwrap(), Some(2.0));
    assert_eq!(nearest_rank_percentile(&values, 25.0).unwrap(), Some(1.0));
    assert_eq!(nearest_rank_percentile(&values, 26.0).unwrap(), Some(2.0));
    assert_eq!(nearest_rank_percentile(&values, 0.0).unwrap(), None);
    assert!(nearest_rank_percentile(&values, 100.0).is_err());
    assert!(nearest_rank_percentile(&[], 10.0).is_err());
}

#[test]
fn threshold_keeps_weights_strictly_above_the_percentile() {
    let pairs: Vec<WeightedPair> = [1.0, 2.0, 3.0, 4.0]
        .iter()
        .enumerate()
        .map(|(k, &w)| WeightedPair { src: format!("s{k}"), dst: format!("d{k}"), weight: w })
        .collect();
    let kept = build_threshold_network(&pairs, 50.0).unwrap();
    assert_eq!(kept, vec![("s2".to_string(), "d2".to_string()), ("s3".to_string(), "d3".to_string())]);
    assert_eq!(build_threshold_network(&pairs, 0.0).unwrap().len(), 4);
}

#[test]
fn weight_files_become_cross_group_edges() {
    let rows = tiny_rows();
    let text = panel_text(&rows.iter().map(String::as_str).collect::<Vec<_>>());
    let panel = ingest_panel_reader(text.as_bytes(), 3).unwrap();
    let weights = read_weights_reader("src,dst,weight\nc,a,0.5\nd,b,2\n".as_bytes()).unwrap();
    let kept = build_threshold_network(&weights, 50.0).unwrap();
    let edges = threshold_edges(&kept, &panel, Group::F).unwrap();
    assert_eq!(edges.len(), 1);
    assert_eq!(panel.unit_labels[edges[0].src.0], "d");
    assert!(threshold_edges(&kept, &panel, Group::B).is_err());
    assert!(read_weights_reader("src,dst,weight\nc,a,-1\n".as_bytes()).is_err());
}
