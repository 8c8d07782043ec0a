//! Complex to real embedding.
//!
//! A complex matrix `H = A + jB` is represented by the real block matrix
//! `[[A, -B], [B, A]]`. The map is an algebra homomorphism, so products,
//! adjoints and positive semidefiniteness carry over. For Hermitian `H` and
//! `V`, `tr(embed(H) embed(V)) = 2 tr(H V)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Real `2m × 2n` embedding of a complex `m × n` matrix.
pub fn complex_embed(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (m, n) = h.shape();
    let mut out = DMatrix::zeros(2 * m, 2 * n);
    for j in 0..n {
        for i in 0..m {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + m, j)] = z.im;
            out[(i + m, j + n)] = z.re;
        }
    }
    out
}

/// Inverse of [`complex_embed`]. Reads the left block column, so it is exact on
/// any matrix produced by the embedding.
///
/// # Panics
/// If either dimension is odd.
pub fn complex_extract(e: &DMatrix<f64>) -> DMatrix<Complex64> {
    let (rows, cols) = e.shape();
    assert!(rows % 2 == 0 && cols % 2 == 0, "embedding must have even dimensions");
    let (m, n) = (rows / 2, cols / 2);
    DMatrix::from_fn(m, n, |i, j| Complex64::new(e[(i, j)], e[(i + m, j)]))
}

/// Projects a real symmetric `2n × 2n` matrix onto the embedded-Hermitian
/// subspace and returns the Hermitian matrix it represents.
///
/// An SDP over real symmetric `X` whose data matrices are all embeddings has an
/// optimal solution of embedded form; averaging the two diagonal blocks (and
/// the two off-diagonal blocks) recovers it without changing any objective or
/// constraint value. If `X ⪰ 0` the result is PSD.
pub fn hermitian_from_embedding(x: &DMatrix<f64>) -> DMatrix<Complex64> {
    let (rows, cols) = x.shape();
    assert!(rows == cols && rows % 2 == 0, "expected an even square matrix");
    let n = rows / 2;
    DMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}
