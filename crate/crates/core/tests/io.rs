use swave::io::{decode_volume, encode_volume, sha256_hex, ArtifactWriter, VolumeHeader};
use swave::pipeline::{DisplacementSource, RunConfig};
use swave::Volume;

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = RunConfig::default();
    cfg.seed = 77;
    cfg.acquisition.source = DisplacementSource::Tracked;
    let text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
}

#[test]
fn partial_config_takes_defaults() {
    let cfg = RunConfig::from_toml("seed = 3\n").unwrap();
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.geometry, RunConfig::default().geometry);
}

#[test]
fn bad_config_is_rejected() {
    assert!(RunConfig::from_toml("seed = \"x\"\n").is_err());
    assert!(RunConfig::from_toml("[inversion]\nspacing = -1.0\n").is_err());
}

#[test]
fn shipped_example_config_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn manifest_hashes_match_file_contents() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ArtifactWriter::new(dir.path()).unwrap();
    w.write_json("a.json", &vec![1, 2, 3]).unwrap();
    w.write_csv("b/rows.csv", &[(1, 2.5), (2, 3.5)]).unwrap();
    let entries = w.finish().unwrap();
    assert!(entries.len() >= 2);
    for e in &entries {
        let bytes = std::fs::read(dir.path().join(&e.path)).unwrap();
        assert_eq!(e.sha256, sha256_hex(&bytes));
        assert_eq!(e.bytes, bytes.len() as u64);
    }
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn volume_encoding_is_deterministic() {
    let v = Volume::from_fn([3, 2, 4], |i, j, k| (i * 8 + j * 4 + k) as f64 * 0.25);
    let h = VolumeHeader::new::<f64>([3, 2, 4]);
    let a = encode_volume(&v, &h).unwrap();
    assert_eq!(a, encode_volume(&v, &h).unwrap());
    assert_eq!(decode_volume::<f64>(&a).unwrap().0, v);
    assert!(decode_volume::<f64>(&a[..a.len() - 1]).is_err());
}
