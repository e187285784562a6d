//! In-batch InfoNCE over a topic/content similarity matrix.
//!
//! Row `i` of the topic matrix is paired with row `i` of the content matrix;
//! every other content row in the batch is a negative for it. Extra content
//! rows beyond the paired block act as additional negatives only.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Scaled similarities `values[i][j] = <topic_i, content_j> / temperature`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub temperature: f64,
}

impl SimilarityMatrix {
    /// Number of paired rows (diagonal positives).
    pub fn pairs(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub grad_topics: Array2<f64>,
    pub grad_contents: Array2<f64>,
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Contract(format!("temperature must be positive, got {temperature}")));
    }
    Ok(())
}

fn scaled_similarity(topics: ArrayView2<f64>, contents: ArrayView2<f64>, temperature: f64) -> Result<SimilarityMatrix> {
    check_temperature(temperature)?;
    if topics.ncols() != contents.ncols() {
        return Err(Error::Contract(format!(
            "embedding widths differ: {} vs {}",
            topics.ncols(),
            contents.ncols()
        )));
    }
    if topics.nrows() == 0 || contents.nrows() < topics.nrows() {
        return Err(Error::Contract(format!(
            "need 1 <= topics ({}) <= contents ({})",
            topics.nrows(),
            contents.nrows()
        )));
    }
    let values = topics.dot(&contents.t()) / temperature;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("similarity matrix has non-finite entries".into()));
    }
    Ok(SimilarityMatrix { values, temperature })
}

/// Square similarity matrix of equally sized topic and content batches.
pub fn similarity_matrix(topics: ArrayView2<f64>, contents: ArrayView2<f64>, temperature: f64) -> Result<SimilarityMatrix> {
    if topics.dim() != contents.dim() {
        return Err(Error::Contract(format!("shape mismatch: {:?} vs {:?}", topics.dim(), contents.dim())));
    }
    scaled_similarity(topics, contents, temperature)
}

/// Similarity of `n` paired rows against `n + extra` content rows.
pub fn similarity_with_extra_negatives(
    topics: ArrayView2<f64>,
    contents: ArrayView2<f64>,
    temperature: f64,
) -> Result<SimilarityMatrix> {
    scaled_similarity(topics, contents, temperature)
}

/// Stable `log(sum(exp(row)))` and the row's softmax.
fn log_softmax_row(row: impl Iterator<Item = f64> + Clone) -> (f64, Vec<f64>) {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    (lse, exps.into_iter().map(|e| e / sum).collect())
}

fn rowwise_values(values: ArrayView2<f64>) -> f64 {
    let n = values.nrows();
    let total: f64 = values
        .outer_iter()
        .enumerate()
        .map(|(i, row)| {
            let (lse, _) = log_softmax_row(row.iter().copied());
            lse - row[i]
        })
        .sum();
    total / n as f64
}

/// Mean over rows of `-log softmax(row)[i]`, the diagonal entry being the positive.
pub fn infonce_rowwise(s: &SimilarityMatrix) -> f64 {
    rowwise_values(s.values.view())
}

/// Mean of the topic-to-content (rows) and content-to-topic (columns of the
/// paired block) orientations.
pub fn infonce_symmetric(s: &SimilarityMatrix) -> f64 {
    let n = s.pairs();
    let block = s.values.slice(s![.., ..n]);
    0.5 * (rowwise_values(s.values.view()) + rowwise_values(block.t()))
}

/// Symmetric InfoNCE on a square batch with its gradients.
pub fn infonce_gradients(topics: ArrayView2<f64>, contents: ArrayView2<f64>, temperature: f64) -> Result<LossReport> {
    if topics.dim() != contents.dim() {
        return Err(Error::Contract(format!("shape mismatch: {:?} vs {:?}", topics.dim(), contents.dim())));
    }
    infonce_gradients_with_extra_negatives(topics, contents, temperature)
}

/// Symmetric InfoNCE where `contents` may carry rows past the paired block.
///
/// With `S = T C^T / tau` (N x M), row softmax `P` over all M columns,
/// column softmax `Q` over the N rows of each paired column (zero in the
/// extra columns) and `E` the N x M partial identity, the loss is
/// `L = (row_loss + col_loss) / 2` and
///
/// ```text
/// dL/dS = ((P - E) + (Q - E)) / (2N)
/// dL/dT = dL/dS . C / tau
/// dL/dC = dL/dS^T . T / tau
/// ```
///
/// The embeddings are treated as free variables; any normalization is
/// differentiated by the caller.
pub fn infonce_gradients_with_extra_negatives(
    topics: ArrayView2<f64>,
    contents: ArrayView2<f64>,
    temperature: f64,
) -> Result<LossReport> {
    let sim = scaled_similarity(topics, contents, temperature)?;
    let (n, m) = sim.values.dim();
    let mut dlds = Array2::<f64>::zeros((n, m));
    let mut row_loss = 0.0;
    for (i, row) in sim.values.outer_iter().enumerate() {
        let (lse, p) = log_softmax_row(row.iter().copied());
        row_loss += lse - row[i];
        for (j, pj) in p.into_iter().enumerate() {
            dlds[[i, j]] += pj;
        }
        dlds[[i, i]] -= 1.0;
    }
    let mut col_loss = 0.0;
    for j in 0..n {
        let col = sim.values.column(j);
        let (lse, q) = log_softmax_row(col.iter().copied());
        col_loss += lse - col[j];
        for (i, qi) in q.into_iter().enumerate() {
            dlds[[i, j]] += qi;
        }
        dlds[[j, j]] -= 1.0;
    }
    let scale = 1.0 / (2.0 * n as f64);
    dlds *= scale;
    let loss = 0.5 * (row_loss + col_loss) / n as f64;

    let grad_topics = dlds.dot(&contents) / temperature;
    let grad_contents = dlds.t().dot(&topics) / temperature;
    Ok(LossReport { loss, grad_topics, grad_contents })
}

/// Sum of squared entries of both gradients, square-rooted.
pub fn gradient_norm(report: &LossReport) -> f64 {
    report
        .grad_topics
        .iter()
        .chain(report.grad_contents.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rows of `m` scaled to unit norm; zero rows stay zero.
pub fn normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sim(values: Array2<f64>) -> SimilarityMatrix {
        SimilarityMatrix { values, temperature: 1.0 }
    }

    #[test]
    fn identity_similarity() {
        let e = Array2::<f64>::eye(2);
        let s = similarity_matrix(e.view(), e.view(), 1.0).unwrap();
        assert_eq!(s.values, array![[1.0, 0.0], [0.0, 1.0]]);
        let s = similarity_matrix(e.view(), e.view(), 0.5).unwrap();
        assert_eq!(s.values, array![[2.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn similarity_contract_violations() {
        let a = Array2::<f64>::eye(2);
        let b = Array2::<f64>::zeros((3, 2));
        assert!(similarity_matrix(a.view(), b.view(), 1.0).is_err());
        assert!(similarity_matrix(a.view(), a.view(), 0.0).is_err());
        assert!(similarity_matrix(a.view(), a.view(), -1.0).is_err());
        assert!(infonce_gradients(a.view(), b.view(), 1.0).is_err());
    }

    #[test]
    fn uniform_rows_give_ln_n() {
        let s = sim(Array2::from_elem((4, 4), 0.7));
        assert!((infonce_rowwise(&s) - 4f64.ln()).abs() < 1e-12);
        assert!((infonce_symmetric(&s) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_two_by_two() {
        let s = sim(array![[10.0, 0.0], [0.0, 10.0]]);
        let expected = (1.0 + (-10f64).exp()).ln();
        assert!((infonce_rowwise(&s) - expected).abs() < 1e-15);
        assert!((expected - 4.5399e-5).abs() < 1e-8);
    }

    #[test]
    fn single_pair_is_zero() {
        assert_eq!(infonce_rowwise(&sim(array![[3.5]])), 0.0);
    }

    #[test]
    fn asymmetric_mean_of_orientations() {
        let s = sim(array![[5.0, 0.0], [3.0, 5.0]]);
        // rows: -log(e^5/(e^5+1)), -log(e^5/(e^3+e^5))
        let rows = ((1.0 + (-5f64).exp()).ln() + (1.0 + (-2f64).exp()).ln()) / 2.0;
        // columns: [5,3] with positive 5, [0,5] with positive 5
        let cols = ((1.0 + (-2f64).exp()).ln() + (1.0 + (-5f64).exp()).ln()) / 2.0;
        assert!((infonce_rowwise(&s) - rows).abs() < 1e-14);
        assert!((infonce_symmetric(&s) - (rows + cols) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let s = sim(array![[2000.0, -2000.0], [1500.0, 1900.0]]);
        let l = infonce_symmetric(&s);
        assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn sign_pattern_for_uniform_rows() {
        // every topic row identical and every content row identical -> all similarities equal
        let t = Array2::from_shape_fn((3, 2), |(_, j)| if j == 0 { 1.0 } else { 0.0 });
        let r = infonce_gradients(t.view(), t.view(), 1.0).unwrap();
        assert!((r.loss - 3f64.ln()).abs() < 1e-12);
        let sim = similarity_matrix(t.view(), t.view(), 1.0).unwrap();
        assert!(sim.values.iter().all(|&v| v == 1.0));
        // dL/dS diagonal negative, off-diagonal positive
        let n = 3.0;
        let diag = ((1.0 / n - 1.0) * 2.0) / (2.0 * n);
        let off = (2.0 / n) / (2.0 * n);
        assert!(diag < 0.0 && off > 0.0);
        // contents equal, so dL/dT rows are (diag + 2 off) * c = 0
        assert!(r.grad_topics.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn extra_negatives_raise_loss() {
        let t = Array2::<f64>::eye(2);
        let mut c = Array2::<f64>::zeros((3, 2));
        c.slice_mut(s![..2, ..]).assign(&t);
        c[[2, 0]] = 0.9;
        c[[2, 1]] = 0.1;
        let plain = infonce_gradients(t.view(), t.view(), 0.5).unwrap();
        let extra = infonce_gradients_with_extra_negatives(t.view(), c.view(), 0.5).unwrap();
        assert!(extra.loss > plain.loss);
        assert_eq!(extra.grad_contents.dim(), (3, 2));
    }
}
