//! Cuts restricted to planes of a Grassmannian net, and the resulting pancakes.

use spherewaist::equalizer::{constrained_solve, grassmann_net, Plane, SolveOptions, SolveOutcome};
use spherewaist::partition::PartitionTree;
use spherewaist::{CenterMap, Error, MapSpec, RngStream};

fn net() -> Vec<Plane> {
    grassmann_net(3, 1, 0.5, 10_000, RngStream::new(21, 0)).unwrap()
}

fn run(depth: usize, planes: &[Plane], opts: &SolveOptions) -> (SolveOutcome, bool) {
    let f = MapSpec::projection(3, 1).build().unwrap();
    match constrained_solve(depth, &f, CenterMap::Centroid, planes, opts) {
        Ok(o) => (o, true),
        Err(Error::NotConverged(o)) => (*o, false),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn depth_two_in_a_two_sphere_of_directions() {
    let planes = net();
    let opts = SolveOptions { tolerance: 4e-3, fine_samples: 1_000_000, verify_samples: 10_000_000, ..Default::default() };
    let (o, converged) = run(2, &planes, &opts);
    assert!(converged);
    let v = o.verification.as_ref().unwrap();
    assert!(v.residual < 1e-2, "{}", v.residual);
    for m in 1..=3 {
        let pl = &planes[PartitionTree::level(m) % planes.len()];
        assert!(pl.projection_norm(o.partition.normal(m).coords()) < 1e-12, "node {m}");
    }
    assert_eq!(o.pancake_widths.len(), 4);
}

#[test]
fn pancakes_thin_out_with_depth() {
    let planes = net();
    let opts = SolveOptions {
        restarts: 2,
        max_iterations: 400,
        tolerance: 5e-3,
        coarse_samples: 10_000,
        fine_samples: 200_000,
        verify_samples: 1_000_000,
        seed: 4,
    };
    let stats: Vec<(f64, f64)> = [2, 3, 4]
        .into_iter()
        .map(|depth| {
            let w = run(depth, &planes, &opts).0.pancake_widths;
            assert_eq!(w.len(), 1 << depth);
            (w.iter().sum::<f64>() / w.len() as f64, w.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    for pair in stats.windows(2) {
        assert!(pair[1].0 < pair[0].0, "mean widths {stats:?}");
        assert!(pair[1].1 <= pair[0].1, "max widths {stats:?}");
    }
}
