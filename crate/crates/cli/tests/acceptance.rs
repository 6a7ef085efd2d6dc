//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use svoxtk::cvt::{init_seeds, lloyd_step, order_zyx, run_cvt, SupervoxelPartition};
use svoxtk::fsq::{Descriptor, FsqConfig};
use svoxtk::geom::Vec3;
use svoxtk::jacobi::{decode_jacobi, decode_sequential, PrevKey, TablePredictor};
use svoxtk::mesh::{normalize_to_half_extent, shapes};
use svoxtk::metrics::{align_best, chamfer_l2, flip_signs, gzip_gap, mcs_normalized, sample_surface, PointSet};
use svoxtk::random::{self, below, unit_f64, Rng};
use svoxtk::sizefield::{density_field, estimate_count, sweep, SizeParams};
use svoxtk::tokens::{decode_tokens, encode_tokens, tokenize, tokenize_with_partition};
use svoxtk::volume::{decode_volume, encode_volume, SaliencyVolume, Voxel, VoxelGrid};

type Outcome = Result<(), String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn full_volume(r: u32, f: impl Fn(Voxel) -> f64) -> SaliencyVolume<f64> {
    let grid = VoxelGrid::full(r).unwrap();
    let vals = grid.voxels().iter().map(|&v| f(v)).collect();
    SaliencyVolume::new(grid, vals).unwrap()
}

fn random_volume(rng: &mut Rng, max_r: u64) -> SaliencyVolume<f64> {
    let r = 2 + below(rng, max_r - 1) as u32;
    let fill = 0.05 + 0.9 * unit_f64(rng);
    let mut pairs = Vec::new();
    for z in 0..r as u16 {
        for y in 0..r as u16 {
            for x in 0..r as u16 {
                if unit_f64(rng) < fill {
                    pairs.push((Voxel::new(x, y, z), unit_f64(rng)));
                }
            }
        }
    }
    if pairs.is_empty() {
        pairs.push((Voxel::new(0, 0, 0), 0.5));
    }
    SaliencyVolume::from_pairs(r, pairs).unwrap()
}

fn compression_law() -> Outcome {
    let r = 64;
    let volumes = [
        ("constant-0", full_volume(r, |_| 0.0)),
        ("constant-1", full_volume(r, |_| 1.0)),
        ("ramp", full_volume(r, |v| v.x as f64 / (r - 1) as f64)),
    ];
    let ks: Vec<f64> = (0..19).map(|i| 1.0 + 0.5 * i as f64).collect();
    let ts = [0.1, 0.2, 0.3, 0.4, 0.5];
    for (name, vol) in &volumes {
        let rows = sweep(vol, &ks, &ts).map_err(|e| e.to_string())?;
        let c = |ki: usize, ti: usize| rows[ti * ks.len() + ki].c;
        for ti in 0..ts.len() {
            check(c(0, ti) == 1.0, || format!("{name}: c(K=1, t={}) = {}", ts[ti], c(0, ti)))?;
            for ki in 1..ks.len() {
                check(c(ki, ti) <= c(ki - 1, ti), || format!("{name}: c rises in K at t={}", ts[ti]))?;
                if ti > 0 {
                    check(c(ki, ti) <= c(ki, ti - 1), || format!("{name}: c rises in t at K={}", ks[ki]))?;
                }
                if *name == "constant-0" {
                    let want = ks[ki].powi(-3);
                    check((c(ki, ti) - want).abs() <= 1e-12, || format!("constant-0: c = {} vs 1/K³ = {want}", c(ki, ti)))?;
                }
            }
        }
    }
    Ok(())
}

fn count_consistency() -> Outcome {
    let mut rng = random::rng(2);
    let cfg = FsqConfig::supervoxel();
    for i in 0..50 {
        let vol = random_volume(&mut rng, 32);
        let k = 1.0 + 5.0 * unit_f64(&mut rng);
        let t = 0.05 + 0.9 * unit_f64(&mut rng);
        let p = SizeParams::new(k, t).unwrap();
        let seq = tokenize(&vol, &p, 40, i, &cfg).map_err(|e| e.to_string())?;
        let n = estimate_count(&vol, &p).unwrap();
        check(seq.len() == n, || format!("volume {i}: {} tokens vs estimate {n}", seq.len()))?;
    }
    Ok(())
}

fn brute_nearest(grid: &VoxelGrid, seeds: &[Vec3<f64>]) -> Vec<u32> {
    grid.voxels()
        .iter()
        .map(|v| {
            let c = [v.x as f64 + 0.5, v.y as f64 + 0.5, v.z as f64 + 0.5];
            let mut best = (f64::INFINITY, 0u32);
            for (i, s) in seeds.iter().enumerate() {
                let d = (c[0] - s.x).powi(2) + (c[1] - s.y).powi(2) + (c[2] - s.z).powi(2);
                if d < best.0 {
                    best = (d, i as u32);
                }
            }
            best.1
        })
        .collect()
}

fn lloyd_correctness() -> Outcome {
    let mut rng = random::rng(3);
    for case in 0..20 {
        let vol = random_volume(&mut rng, 24);
        let n = (1 + below(&mut rng, 40) as usize).min(vol.len());
        let p = SizeParams::new(1.0 + 4.0 * unit_f64(&mut rng), 0.05 + 0.9 * unit_f64(&mut rng)).unwrap();
        let field = density_field(&vol, &p).unwrap();
        let seeds = init_seeds(&field, n, case).unwrap();
        let mut part = SupervoxelPartition::from_seeds(&field, seeds).unwrap();
        for it in 0..40 {
            let next = lloyd_step(&field, &part);
            let (a, b) = (part.energy(), next.energy());
            check(b <= a + 1e-9 * a.abs().max(f64::MIN_POSITIVE), || format!("case {case} step {it}: energy {a} -> {b}"))?;
            part = next;
        }
        let brute = brute_nearest(vol.grid(), part.seeds());
        check(part.assignment() == brute.as_slice(), || format!("case {case}: assignment differs from brute force"))?;
        let nonempty = part.populations().iter().filter(|&&c| c > 0).count();
        check(nonempty == n, || format!("case {case}: {nonempty} non-empty cells of {n}"))?;
    }
    Ok(())
}

fn adaptivity() -> Outcome {
    // High half at saliency 0.55 (cell size 2.5), low half at 0 (size 4).
    let vol = full_volume(24, |v| if v.x >= 12 { 0.55 } else { 0.0 });
    let p = SizeParams::new(4.0, 0.1).unwrap();
    let field = density_field(&vol, &p).unwrap();
    let n = estimate_count(&vol, &p).unwrap();
    for seed in 0..5 {
        let part = run_cvt(&field, n, 40, seed).map_err(|e| e.to_string())?;
        let pops = part.populations();
        let (mut hi, mut lo) = ((0usize, 0usize), (0usize, 0usize));
        for (s, &c) in part.seeds().iter().zip(&pops) {
            let side = if s.x >= 12.0 { &mut hi } else { &mut lo };
            side.0 += c;
            side.1 += 1;
        }
        let (mh, ml) = (hi.0 as f64 / hi.1 as f64, lo.0 as f64 / lo.1 as f64);
        check(mh < ml, || format!("seed {seed}: high-half mean {mh} not below low-half mean {ml}"))?;
    }
    Ok(())
}

fn ordering_determinism() -> Outcome {
    let vol = full_volume(12, |v| (v.x as f64 * 0.07 + v.z as f64 * 0.02).min(1.0));
    let p = SizeParams::new(3.0, 0.2).unwrap();
    let cfg = FsqConfig::supervoxel();
    let (a, part) = tokenize_with_partition(&vol, &p, 40, 5, &cfg).map_err(|e| e.to_string())?;
    let b = tokenize(&vol, &p, 40, 5, &cfg).map_err(|e| e.to_string())?;
    check(encode_tokens(&a) == encode_tokens(&b), || "SVXT bytes differ between identical runs".into())?;
    let mut rng = random::rng(8);
    for _ in 0..5 {
        let mut order: Vec<usize> = (0..part.len()).collect();
        random::shuffle(&mut rng, &mut order);
        let relabeled = part.relabel(&order).map_err(|e| e.to_string())?;
        check(order_zyx(&part).centers == order_zyx(&relabeled).centers, || "ordered centers depend on labels".into())?;
    }
    Ok(())
}

fn fsq_roundtrip() -> Outcome {
    let cfg = FsqConfig::supervoxel();
    check(cfg.codebook_size() == 10125, || format!("codebook size {}", cfg.codebook_size()))?;
    let lattice: Vec<Vec<f64>> = (0..10125).map(|c| cfg.decode::<f64>(c).unwrap().values().to_vec()).collect();
    for (c, point) in lattice.iter().enumerate() {
        let back = cfg.encode(&Descriptor::new(point.clone()).unwrap()).unwrap();
        check(back == c as u32, || format!("encode(decode({c})) = {back}"))?;
    }
    let mut rng = random::rng(6);
    for i in 0..10_000 {
        let v: Vec<f64> = (0..5).map(|_| 2.0 * unit_f64(&mut rng) - 1.0).collect();
        let got = cfg.decode::<f64>(cfg.encode(&Descriptor::new(v.clone()).unwrap()).unwrap()).unwrap();
        let dist = |p: &[f64]| p.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let best = lattice.iter().map(|p| dist(p)).fold(f64::INFINITY, f64::min);
        check(dist(got.values()) == best, || format!("sample {i}: {} vs nearest {best}", dist(got.values())))?;
    }
    Ok(())
}

fn random_table(rng: &mut Rng) -> (TablePredictor, u32) {
    let v = 1 + below(rng, 16) as u32;
    let rows = below(rng, 48) as usize;
    let mut table = vec![(None, PrevKey::Any, below(rng, v as u64) as u32)];
    for _ in 0..rows {
        let pos = if below(rng, 2) == 0 { None } else { Some(below(rng, 64) as usize) };
        let prev = match below(rng, 3) {
            0 => PrevKey::Any,
            1 => PrevKey::Start,
            _ => PrevKey::Code(below(rng, v as u64) as u32),
        };
        table.push((pos, prev, below(rng, v as u64) as u32));
    }
    (TablePredictor::new(v, table).unwrap(), v)
}

fn jacobi_theorem() -> Outcome {
    let mut rng = random::rng(7);
    for case in 0..200 {
        let (pred, _) = random_table(&mut rng);
        let n = 1 + below(&mut rng, 64) as usize;
        let expected = decode_sequential(&pred, n, b"ctx").map_err(|e| e.to_string())?;
        for seed in 0..5 {
            let trace = decode_jacobi(&pred, n, b"ctx", 30, seed).map_err(|e| e.to_string())?;
            check(trace.sequence == expected, || format!("case {case} seed {seed}: output differs"))?;
            check(trace.iterations <= n.min(30), || format!("case {case}: {} iterations for n={n}", trace.iterations))?;
            check(n > 30 || !trace.fallback, || format!("case {case}: fallback at n={n}"))?;
        }
    }
    Ok(())
}

fn metric_oracles() -> Outcome {
    let mut rng = random::rng(9);
    let mut cloud = |n: usize| -> PointSet<f64> {
        PointSet::new((0..n).map(|_| Vec3::new(unit_f64(&mut rng), unit_f64(&mut rng), unit_f64(&mut rng))).collect())
    };
    let (p, q) = (cloud(500), cloud(500));
    let brute = |a: &PointSet<f64>, b: &PointSet<f64>| {
        a.points().iter().map(|x| b.points().iter().map(|y| x.distance_squared(*y)).fold(f64::INFINITY, f64::min)).sum::<f64>()
            / a.len() as f64
    };
    let cd = chamfer_l2(&p, &q).unwrap();
    let want = brute(&p, &q) + brute(&q, &p);
    check((cd - want).abs() <= 1e-12, || format!("chamfer {cd} vs brute force {want}"))?;
    check(chamfer_l2(&p, &p).unwrap() == 0.0, || "identical sets give nonzero CD".into())?;
    let single = |x: f64| PointSet::new(vec![Vec3::new(x, 0.0, 0.0)]);
    check(chamfer_l2(&single(0.0), &single(1.0)).unwrap() == 2.0, || "unit pair CD is not 2".into())?;

    let e4 = (mcs_normalized(&shapes::icosphere::<f64>(1.0, 4)).unwrap() - 1.0).abs();
    let e5 = (mcs_normalized(&shapes::icosphere::<f64>(1.0, 5)).unwrap() - 1.0).abs();
    check(e4 <= 0.05 && e5 < e4, || format!("MCS error {e4} at subdiv 4, {e5} at subdiv 5"))?;

    let shape = normalize_to_half_extent(
        &shapes::subdivided_cube::<f64>(1.0, 3).map_vertices(|v| Vec3::new(v.x + 0.4 * v.y * v.y, v.y * 0.7, v.z + 0.3 * v.x)),
        1.0,
    )
    .unwrap();
    let a = sample_surface(&shape, 2000, 1).unwrap();
    let mirrored = a.map(|v| Vec3::new(-v.x, v.y, v.z));
    let al = align_best(&a, &mirrored, 50).unwrap();
    let unflipped = chamfer_l2(&a.map(|v| v - a.centroid() + mirrored.centroid()), &mirrored).unwrap();
    check(flip_signs(al.flip)[0] == -1.0, || format!("selected flip {} keeps x", al.flip))?;
    check(al.cd <= unflipped, || format!("aligned CD {} above unflipped {unflipped}", al.cd))?;

    check(gzip_gap(&[vec![42; 1000]], 16, 0).unwrap() == 0.0, || "constant sequence has nonzero gap".into())?;
    let ramp: Vec<u32> = (0..1000).collect();
    let gap = gzip_gap(&[ramp], 16, 0).unwrap();
    check(gap > 0.0, || format!("ramp gap {gap} not positive"))
}

fn mutate(rng: &mut Rng, bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    for _ in 0..1 + below(rng, 4) {
        match below(rng, 5) {
            0 if !out.is_empty() => {
                let i = below(rng, out.len() as u64) as usize;
                out[i] ^= 1 << below(rng, 8);
            }
            1 if !out.is_empty() => {
                let i = below(rng, out.len() as u64) as usize;
                out[i] = below(rng, 256) as u8;
            }
            2 => {
                let len = below(rng, out.len() as u64 + 1) as usize;
                out.truncate(len);
            }
            3 => {
                let i = below(rng, out.len() as u64 + 1) as usize;
                out.insert(i, below(rng, 256) as u8);
            }
            _ if !out.is_empty() => {
                let i = below(rng, out.len() as u64) as usize;
                out.remove(i);
            }
            _ => {}
        }
    }
    out
}

fn format_fuzz() -> Outcome {
    let vol = full_volume(4, |v| (v.x as f64 + 2.0 * v.y as f64 + 3.0 * v.z as f64) / 18.0);
    let svxv = encode_volume(&vol);
    let seq = tokenize(&vol, &SizeParams::new(2.0, 0.3).unwrap(), 5, 0, &FsqConfig::supervoxel()).unwrap();
    let svxt = encode_tokens(&seq);
    let mut rng = random::rng(10);
    let (mut errors, mut parses) = (0usize, 0usize);
    for i in 0..10_000 {
        let (vb, tb) = (mutate(&mut rng, &svxv), mutate(&mut rng, &svxt));
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let v = decode_volume::<f64>(&vb).map(|v| encode_volume(&v) == vb);
            let t = decode_tokens(&tb).map(|t| encode_tokens(&t) == tb);
            (v, t)
        }))
        .map_err(|_| format!("reader panicked on mutation {i}"))?;
        for r in [outcome.0, outcome.1] {
            match r {
                Ok(true) => parses += 1,
                Ok(false) => return Err(format!("mutation {i} parsed but does not re-encode to the same bytes")),
                Err(_) => errors += 1,
            }
        }
    }
    check(errors + parses == 20_000, || "unaccounted mutations".into())
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_svoxtk")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run_cli(args: &[&str]) -> Outcome {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("svoxtk {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn pipeline_smoke() -> Outcome {
    let dir = std::env::temp_dir().join(format!("svoxtk-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let mut tokens = Vec::new();
    for shape in ["cube", "icosphere"] {
        let obj = fixture(&format!("{shape}.obj")).to_string_lossy().into_owned();
        let svxv = p(&format!("{shape}.svxv"));
        let svxt = p(&format!("{shape}.svxt"));
        run_cli(&["voxelize", "--input", &obj, "--resolution", "64", "--output", &svxv])?;
        run_cli(&["saliency", "--input", &obj, "--output", &p(&format!("{shape}-saliency.csv"))])?;
        run_cli(&["sweep", "--input", &svxv, "--output", &p(&format!("{shape}-sweep.csv"))])?;
        run_cli(&[
            "partition", "--input", &svxv, "--seeds-out", &p(&format!("{shape}-seeds.csv")),
            "--assignment-out", &p(&format!("{shape}-assign.csv")), "--summary-out", &p(&format!("{shape}-summary.csv")),
        ])?;
        run_cli(&["tokenize", "--input", &svxv, "--output", &svxt])?;
        tokens.push((obj, svxt));
    }
    let report = p("report.csv");
    let mut args = vec!["metrics".to_string()];
    for (obj, svxt) in &tokens {
        args.extend(["--reference".into(), obj.clone(), "--candidate".into(), obj.clone(), "--tokens".into(), svxt.clone()]);
    }
    args.extend(["--samples".into(), "5000".into(), "--report".into(), report.clone()]);
    run_cli(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    let text = std::fs::read_to_string(&report).map_err(|e| e.to_string())?;
    check(text.lines().count() == 3, || format!("report has {} lines", text.lines().count()))?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 10] = [
        (1, "compression-law suite", 5, compression_law),
        (2, "count consistency", 30, count_consistency),
        (3, "Lloyd correctness", 60, lloyd_correctness),
        (4, "adaptivity", 60, adaptivity),
        (5, "ordering determinism", 60, ordering_determinism),
        (6, "FSQ exhaustive roundtrip", 5, fsq_roundtrip),
        (7, "Jacobi fixed-point theorem", 30, jacobi_theorem),
        (8, "metric oracles", 120, metric_oracles),
        (9, "format fuzz", 60, format_fuzz),
        (10, "pipeline smoke", 120, pipeline_smoke),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            check(elapsed <= Duration::from_secs(budget), || format!("took {elapsed:.2?}, budget {budget} s"))
        });
        match result {
            Ok(()) => println!("criterion {id:>2} PASS  {name} ({elapsed:.2?}, budget {budget} s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({elapsed:.2?}, budget {budget} s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
