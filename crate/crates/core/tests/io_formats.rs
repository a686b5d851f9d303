use std::fs;

use ndarray::array;
use qgw::error::Error;
use qgw::harness::blobs;
use qgw::io::*;
use qgw::partitioning::{voronoi_partition, BlockCount, PartitionConfig};
use qgw::{match_qgw, MmSpace, QgwConfig};

#[test]
fn coupling_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let x = MmSpace::from_points(blobs(90, 1).0, None).unwrap();
    let y = MmSpace::from_points(blobs(70, 2).0, None).unwrap();
    let px = voronoi_partition(&x, &PartitionConfig::voronoi(BlockCount::Fraction(0.2), 1)).unwrap();
    let py = voronoi_partition(&y, &PartitionConfig::voronoi(BlockCount::Fraction(0.2), 2)).unwrap();
    let (qc, _) = match_qgw(&x, &px, &y, &py, &QgwConfig::default()).unwrap();
    let path = dir.path().join("c.txt");
    write_coupling(&path, &qc).unwrap();
    let back = read_coupling(&path, px.clone(), py.clone()).unwrap();
    assert_eq!(back, qc);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(&format!("{} {} 90 70\n", px.len(), py.len())));

    // partition files round-trip too
    let pp = dir.path().join("p.txt");
    write_partition(&pp, &px).unwrap();
    assert_eq!(read_partition(&pp, x.measure()).unwrap(), px);

    // mismatched partitions are rejected
    assert!(read_coupling(&path, py.clone(), px.clone()).is_err());

    let dense = dir.path().join("d.txt");
    write_dense_triplets(&dense, &qc).unwrap();
    assert_eq!(fs::read_to_string(&dense).unwrap().lines().count(), qc.nnz());
}

#[test]
fn points_with_header_and_extras() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pts.csv");
    fs::write(&path, "x,y,f0,f1,label,weight\n0,0,1,2,a,1\n3,4,5,6,b,3\n").unwrap();
    let p = read_points(&path).unwrap();
    assert_eq!(p.coords, array![[0.0, 0.0], [3.0, 4.0]]);
    assert_eq!(p.features.clone().unwrap(), array![[1.0, 2.0], [5.0, 6.0]]);
    assert_eq!(p.labels.clone().unwrap(), vec!["a", "b"]);
    assert_eq!(p.weights.clone().unwrap(), vec![1.0, 3.0]);
    let out = dir.path().join("out.csv");
    write_points(&out, &p).unwrap();
    assert_eq!(read_points(&out).unwrap(), p);

    fs::write(&path, "0.5,1\n2,3.25\n").unwrap();
    let p = read_points(&path).unwrap();
    assert_eq!(p.coords, array![[0.5, 1.0], [2.0, 3.25]]);
    assert!(p.features.is_none() && p.labels.is_none() && p.weights.is_none());
}

#[test]
fn malformed_files_report_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x,y\n0,0\n1,oops\n").unwrap();
    match read_points(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(&path, "x,y\n0,0\n1\n").unwrap();
    assert!(matches!(read_points(&path), Err(Error::Parse { line: 3, .. })));

    let g = dir.path().join("g.txt");
    fs::write(&g, "# comment\n0 1\n1 2 2.5\n\n2 x\n").unwrap();
    assert!(matches!(read_graph(&g, None), Err(Error::Parse { line: 5, .. })));
    fs::write(&g, "0 1\n1 2 2.5 # trailing\n").unwrap();
    assert_eq!(read_graph(&g, None).unwrap(), (3, vec![(0, 1, 1.0), (1, 2, 2.5)]));
    assert_eq!(read_graph(&g, Some(5)).unwrap().0, 5);

    let p = dir.path().join("p.txt");
    fs::write(&p, "0 0 1\n1 0 0\n1 1 1\n").unwrap();
    assert!(matches!(read_partition(&p, &[0.5, 0.5]), Err(Error::Parse { line: 3, .. })));
    fs::write(&p, "0 0 0\n1 0 0\n").unwrap();
    assert!(read_partition(&p, &[0.5, 0.5]).is_err());

    assert!(matches!(read_points(&dir.path().join("missing.csv")), Err(Error::Io(_))));
}

#[test]
fn index_lists_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.txt");
    fs::write(&path, "2\n0\n1\n").unwrap();
    assert_eq!(read_index_list(&path).unwrap(), vec![2, 0, 1]);
    fs::write(&path, "0 2\n1 0\n2 1\n").unwrap();
    assert_eq!(read_index_list(&path).unwrap(), vec![2, 0, 1]);
    fs::write(&path, "1 2\n").unwrap();
    assert!(read_index_list(&path).is_err());
    fs::write(&path, "a\nb\n\n").unwrap();
    assert_eq!(read_labels(&path).unwrap(), vec!["a", "b"]);
    let t = dir.path().join("t.csv");
    write_table(&t, array![[0.25, 1.0], [0.5, 0.75]].view()).unwrap();
    assert_eq!(read_table(&t).unwrap(), array![[0.25, 1.0], [0.5, 0.75]]);
}
