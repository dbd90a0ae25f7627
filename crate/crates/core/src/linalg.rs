//! Small dense linear-algebra helpers shared by the gate constructors.

use crate::fock::{CMatrix, C64};

/// Matrix exponential by scaling and squaring with Pade approximants.
///
/// The generator is first split into the connected components of its
/// sparsity graph (photon-number or parity sectors for most gates) and each
/// block is exponentiated on its own.
pub fn expm(generator: &CMatrix) -> CMatrix {
    let n = generator.nrows();
    let blocks = sparsity_blocks(generator);
    if blocks.len() == 1 {
        return generator.exp();
    }
    let mut out = CMatrix::zeros(n, n);
    for block in blocks {
        let sub = sub_block(generator, &block);
        let e = if block.len() == 1 {
            sub.map(|z| z.exp())
        } else {
            sub.exp()
        };
        for (i, &bi) in block.iter().enumerate() {
            for (j, &bj) in block.iter().enumerate() {
                out[(bi, bj)] = e[(i, j)];
            }
        }
    }
    out
}

/// Connected components of the graph with an edge wherever `m[(i, j)] != 0`.
fn sparsity_blocks(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// `A (x) B` with `B` on the fast (little-endian low) index.
///
/// In the local two-mode basis `n_first + D n_second`, an operator `A` acting
/// on the first mode is `kron(I, A)`.
pub fn kron(slow: &CMatrix, fast: &CMatrix) -> CMatrix {
    slow.kronecker(fast)
}

/// Embeds single-mode operators into the two-mode local space.
pub fn on_first(op: &CMatrix) -> CMatrix {
    kron(&CMatrix::identity(op.nrows(), op.nrows()), op)
}

pub fn on_second(op: &CMatrix) -> CMatrix {
    kron(op, &CMatrix::identity(op.nrows(), op.nrows()))
}

/// Largest entry of `|a - b|`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Indices of local basis states whose every mode occupation is below `levels`.
///
/// `modes` is the number of modes sharing the local index at cutoff `cutoff`.
pub fn low_block_indices(cutoff: usize, modes: usize, levels: usize) -> Vec<usize> {
    let len = cutoff.pow(modes as u32);
    (0..len)
        .filter(|&idx| {
            let mut rem = idx;
            (0..modes).all(|_| {
                let digit = rem % cutoff;
                rem /= cutoff;
                digit < levels
            })
        })
        .collect()
}

/// Restricts a square matrix to the rows and columns in `indices`.
pub fn sub_block(m: &CMatrix, indices: &[usize]) -> CMatrix {
    CMatrix::from_fn(indices.len(), indices.len(), |i, j| m[(indices[i], indices[j])])
}

/// `max |(G^dagger G - I)_{ij}|` over the low block.
pub fn unitarity_defect(m: &CMatrix, indices: &[usize]) -> f64 {
    let gg = m.adjoint() * m;
    let id = CMatrix::identity(gg.nrows(), gg.ncols());
    max_abs_diff(&sub_block(&gg, indices), &sub_block(&id, indices))
}

/// `ln(n!)` for the Fock-amplitude normalizations.
pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    #[test]
    fn exponential_of_anti_hermitian_matches_eigendecomposition() {
        let n = 12;
        let h = CMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (i.min(j) as f64, i.max(j) as f64);
            let re = (0.3 * a + 0.7 * b).sin();
            let im = if i == j {
                0.0
            } else {
                (a - 2.0 * b).cos() * if i < j { 1.0 } else { -1.0 }
            };
            C64::new(re, im)
        });
        let eig = SymmetricEigen::new(h.clone());
        let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::new(0.0, x).exp()));
        let oracle = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let got = expm(&(h * C64::new(0.0, 1.0)));
        assert!(max_abs_diff(&got, &oracle) < 1e-11);
    }

    #[test]
    fn exponential_of_nilpotent_is_finite_series() {
        let mut n = CMatrix::zeros(3, 3);
        n[(0, 1)] = C64::new(2.0, 0.0);
        n[(1, 2)] = C64::new(3.0, 0.0);
        let e = expm(&n);
        let expected = CMatrix::identity(3, 3) + &n + &n * &n * C64::new(0.5, 0.0);
        assert!(max_abs_diff(&e, &expected) < 1e-13);
    }

    #[test]
    fn block_diagonal_exponential_matches_dense() {
        let n = 9;
        // couples indices of equal residue mod 3 only
        let g = CMatrix::from_fn(n, n, |i, j| {
            if i % 3 == j % 3 {
                C64::new(0.1 * (i + 2 * j) as f64, 0.05 * (i as f64 - j as f64))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        assert_eq!(sparsity_blocks(&g).len(), 3);
        assert!(max_abs_diff(&expm(&g), &g.exp()) < 1e-12);
    }

    #[test]
    fn kron_puts_first_mode_on_fast_index() {
        let d = 3;
        let mut a = CMatrix::zeros(d, d);
        a[(0, 1)] = C64::new(1.0, 0.0);
        let big = on_first(&a);
        // |1,2> -> |0,2>: local index 1 + 3*2 -> 0 + 3*2
        assert_eq!(big[(6, 7)], C64::new(1.0, 0.0));
        let big2 = on_second(&a);
        // |2,1> -> |2,0>
        assert_eq!(big2[(2, 5)], C64::new(1.0, 0.0));
    }

    #[test]
    fn low_block() {
        assert_eq!(low_block_indices(3, 2, 2), vec![0, 1, 3, 4]);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }
}
