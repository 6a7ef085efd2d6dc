use std::collections::HashSet;

use svoxtk::cvt::zyx_cmp;
use svoxtk::fsq::FsqConfig;
use svoxtk::sizefield::{estimate_count, SizeParams};
use svoxtk::tokens::{decode_tokens, encode_tokens, perturb_tokens_traced, tokenize, tokenize_with_partition};
use svoxtk::volume::{SaliencyVolume, VoxelGrid};

fn graded(r: u32) -> SaliencyVolume<f64> {
    let grid = VoxelGrid::full(r).unwrap();
    let vals = grid.voxels().iter().map(|v| (v.x as f64 + v.y as f64) / (2 * (r - 1)) as f64).collect();
    SaliencyVolume::new(grid, vals).unwrap()
}

#[test]
fn record_count_matches_estimate() {
    let cfg = FsqConfig::supervoxel();
    for r in [6u32, 9, 12] {
        let vol = graded(r);
        let p = SizeParams::new(4.0, 0.1).unwrap();
        let seq = tokenize(&vol, &p, 10, 0, &cfg).unwrap();
        assert_eq!(seq.len(), estimate_count(&vol, &p).unwrap());
        let back = decode_tokens(&encode_tokens(&seq)).unwrap();
        assert_eq!(back, seq);
        assert!(seq.records.windows(2).all(|w| zyx_cmp(w[0].center, w[1].center).is_lt()));
    }
}

#[test]
fn saturated_volume_is_not_compressed() {
    let grid = VoxelGrid::full(5).unwrap();
    let vol = SaliencyVolume::constant(grid, 1.0).unwrap();
    let seq = tokenize(&vol, &SizeParams::new(4.0, 0.1).unwrap(), 5, 3, &FsqConfig::supervoxel()).unwrap();
    assert_eq!(seq.len(), vol.len());
}

#[test]
fn tokenization_is_deterministic() {
    let vol = graded(10);
    let p = SizeParams::new(3.0, 0.2).unwrap();
    let cfg = FsqConfig::supervoxel();
    let a = encode_tokens(&tokenize(&vol, &p, 20, 7, &cfg).unwrap());
    let b = encode_tokens(&tokenize(&vol, &p, 20, 7, &cfg).unwrap());
    assert_eq!(a, b);
    let (seq, partition) = tokenize_with_partition(&vol, &p, 20, 7, &cfg).unwrap();
    assert_eq!(seq.len(), partition.len());
}

#[test]
fn perturbation_touches_exactly_floor_fraction_positions() {
    let vol = graded(16);
    let p = SizeParams::new(1.3, 0.5).unwrap();
    let seq = tokenize(&vol, &p, 2, 0, &FsqConfig::supervoxel()).unwrap();
    let n = seq.len();
    let (out, positions) = perturb_tokens_traced(&seq, 0.05, 4).unwrap();
    let distinct: HashSet<usize> = positions.iter().copied().collect();
    assert_eq!(distinct.len(), (0.05 * n as f64).floor() as usize);
    for (i, (a, b)) in out.records.iter().zip(&seq.records).enumerate() {
        assert_eq!(a.center, b.center);
        if a.code != b.code {
            assert!(distinct.contains(&i));
        }
    }
}

#[test]
fn thousand_tokens_lose_fifty() {
    use svoxtk::geom::Vec3;
    use svoxtk::tokens::{TokenHeader, TokenRecord, TokenSequence};
    let records = (0..1000).map(|i| TokenRecord { center: Vec3::new(0.5, 0.5, i as f32), code: 7 }).collect();
    let header = TokenHeader { resolution: 1024, k: 4.0, t: 0.1, levels: vec![9, 9, 5, 5, 5] };
    let seq = TokenSequence { header, records };
    let (_, positions) = perturb_tokens_traced(&seq, 0.05, 0).unwrap();
    assert_eq!(positions.iter().collect::<HashSet<_>>().len(), 50);
}
