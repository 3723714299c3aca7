//! Alpert operator against dense, independently computed references on a
//! 512-point cloud.
//!
//! Detail bases are not unique, so the oracle compares subspaces: the scaling
//! columns of every group must span the same space as a Gram-Schmidt basis of
//! the group's monomials, and every detail column must be supported on its
//! group and orthogonal to those monomials.

use meshcs::basis::build_for_cloud;
use meshcs::mesh::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Dense = Vec<Vec<f64>>; // column-major: cols[c][r]

fn cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(dim, (0..n * dim).map(|_| rng.gen()).collect()).unwrap()
}

fn exponents(order: usize, dim: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(dim, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order as u32 - 1, &mut Vec::new(), &mut out);
    out
}

/// Orthonormal basis of the monomials of total degree < order on `rows`,
/// by twice-iterated modified Gram-Schmidt on mean-centred coordinates.
fn monomial_basis(cloud: &PointCloud, rows: &[usize], order: usize) -> Vec<Vec<f64>> {
    let dim = cloud.dim();
    let mean: Vec<f64> = (0..dim)
        .map(|a| rows.iter().map(|&i| cloud.point(i)[a]).sum::<f64>() / rows.len() as f64)
        .collect();
    let spread: Vec<f64> = (0..dim)
        .map(|a| {
            rows.iter()
                .map(|&i| (cloud.point(i)[a] - mean[a]).abs())
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let mut q: Vec<Vec<f64>> = Vec::new();
    for e in exponents(order, dim) {
        let mut v: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let p = cloud.point(i);
                (0..dim)
                    .map(|a| ((p[a] - mean[a]) / spread[a]).powi(e[a] as i32))
                    .product()
            })
            .collect();
        let before = norm(&v);
        for _ in 0..2 {
            for b in &q {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let after = norm(&v);
        if after > 1e-9 * before.max(1.0) {
            v.iter_mut().for_each(|x| *x /= after);
            q.push(v);
        }
    }
    q
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dense_factor(basis: &meshcs::basis::AlpertBasis, level: usize) -> Dense {
    let m = basis.factor(level).to_dense();
    (0..basis.len()).map(|c| m.col(c).to_vec()).collect()
}

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a[0].len();
    b.iter()
        .map(|bc| {
            let mut out = vec![0.0; n];
            for (k, &bk) in bc.iter().enumerate() {
                if bk != 0.0 {
                    out.iter_mut().zip(&a[k]).for_each(|(o, x)| *o += bk * x);
                }
            }
            out
        })
        .collect()
}

fn check_cloud(cloud: &PointCloud, order: usize) {
    let (hierarchy, basis) = build_for_cloud(cloud, order).unwrap();
    let n = cloud.len();
    let mut product: Option<Dense> = None;

    for level in 1..=basis.num_levels() {
        let factor = dense_factor(&basis, level);
        let psi = match product {
            None => factor,
            Some(p) => matmul(&p, &factor),
        };

        // the library's truncated operator equals the explicit factor product
        for (c, col) in psi.iter().enumerate() {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let applied = basis.apply(&e, level).unwrap();
            let diff = applied
                .iter()
                .zip(col)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "w={order} level {level} column {c}: {diff:e}");
        }

        // orthonormal columns
        for a in 0..n {
            for b in a..n {
                let g: f64 = psi[a].iter().zip(&psi[b]).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (g - target).abs() < 1e-10,
                    "w={order} level {level} gram ({a},{b}) = {g}"
                );
            }
        }

        for block in &basis.factor(level).blocks {
            let rows = &hierarchy.node(block.node).point_indices;
            let q = monomial_basis(cloud, rows, order);
            let mut inside = vec![false; n];
            rows.iter().for_each(|&i| inside[i] = true);

            assert_eq!(
                block.scaling,
                q.len(),
                "w={order} node {} scaling rank",
                block.node
            );

            // scaling projector equals the monomial projector on the group
            for (ri, &r) in rows.iter().enumerate() {
                for (ci, &c) in rows.iter().enumerate() {
                    let lib: f64 = block
                        .scaling_slots()
                        .iter()
                        .map(|&s| psi[s][r] * psi[s][c])
                        .sum();
                    let oracle: f64 = q.iter().map(|v| v[ri] * v[ci]).sum();
                    assert!(
                        (lib - oracle).abs() < 1e-9,
                        "w={order} node {} projector",
                        block.node
                    );
                }
            }

            for &s in block.slots.iter() {
                let col = &psi[s];
                let outside = (0..n)
                    .filter(|&i| !inside[i])
                    .map(|i| col[i].abs())
                    .fold(0.0, f64::max);
                assert!(
                    outside < 1e-14,
                    "column {s} leaks outside node {}",
                    block.node
                );
            }
            for &s in block.detail_slots() {
                let local: Vec<f64> = rows.iter().map(|&i| psi[s][i]).collect();
                for v in &q {
                    let moment: f64 = v.iter().zip(&local).map(|(x, y)| x * y).sum();
                    assert!(moment.abs() < 1e-10, "detail {s} has moment {moment:e}");
                }
            }
        }
        product = Some(psi);
    }
}

#[test]
fn dense_oracle_2d() {
    let c = cloud(512, 2, 11);
    for order in [1, 2, 3, 5] {
        check_cloud(&c, order);
    }
}

#[test]
fn dense_oracle_1d_and_3d() {
    check_cloud(&cloud(512, 1, 12), 4);
    check_cloud(&cloud(512, 3, 13), 2);
}

#[test]
fn dense_oracle_degenerate_points() {
    // collinear points in 2D give rank-deficient monomial blocks
    let coords: Vec<f64> = (0..256)
        .flat_map(|i| {
            let t = i as f64 / 255.0;
            [t, 0.5 * t + 0.1]
        })
        .collect();
    check_cloud(&PointCloud::new(2, coords).unwrap(), 3);
}
