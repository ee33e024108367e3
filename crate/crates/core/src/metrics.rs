//! Confusion-matrix metrics and the score-delta arithmetic used in reports.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
    ignore_index: u32,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize, ignore_index: u32) -> Self {
        Self {
            counts: Array2::zeros((num_classes, num_classes)),
            ignore_index,
        }
    }

    pub fn from_counts(counts: Array2<u64>, ignore_index: u32) -> Result<Self> {
        if counts.nrows() != counts.ncols() || counts.nrows() == 0 {
            return Err(Error::Metrics(format!("confusion matrix must be square, got {:?}", counts.dim())));
        }
        Ok(Self { counts, ignore_index })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Accumulates one prediction/label pair; ignored labels are skipped.
    pub fn update(&mut self, predicted: ArrayView2<u32>, label: ArrayView2<u32>) -> Result<()> {
        if predicted.dim() != label.dim() {
            return Err(Error::Metrics(format!(
                "prediction {:?} and label {:?} differ in shape",
                predicted.dim(),
                label.dim()
            )));
        }
        let c = self.num_classes();
        let mut local = Array2::<u64>::zeros((c, c));
        for (&p, &t) in predicted.iter().zip(label.iter()) {
            if t == self.ignore_index {
                continue;
            }
            let (p, t) = (p as usize, t as usize);
            if p >= c {
                return Err(Error::Metrics(format!("predicted class {p} out of range for {c} classes")));
            }
            if t >= c {
                return Err(Error::Metrics(format!("label {t} out of range for {c} classes")));
            }
            local[[t, p]] += 1;
        }
        self.counts += &local;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::Metrics("cannot merge matrices of different class counts".into()));
        }
        self.counts += &other.counts;
        Ok(())
    }

    /// `(TP, FP, FN)` of class `c`.
    pub fn tp_fp_fn(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.counts[[c, c]];
        let col: u64 = self.counts.column(c).sum();
        let row: u64 = self.counts.row(c).sum();
        (tp, col - tp, row - tp)
    }

    /// Per-class scores; `None` where the class never occurs in labels or predictions.
    pub fn per_class(&self) -> Vec<Option<ClassScore>> {
        (0..self.num_classes())
            .map(|c| {
                let (tp, fp, fn_) = self.tp_fp_fn(c);
                let support = tp + fp + fn_;
                (support > 0).then(|| ClassScore {
                    f1: 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
                    iou: tp as f64 / support as f64,
                })
            })
            .collect()
    }

    pub fn f1_per_class(&self) -> Vec<Option<f64>> {
        self.per_class().iter().map(|s| s.map(|s| s.f1)).collect()
    }

    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        self.per_class().iter().map(|s| s.map(|s| s.iou)).collect()
    }

    /// Macro means over included classes, skipping any listed in `excluded`.
    pub fn summary(&self, excluded: &[usize]) -> Result<Summary> {
        if self.total() == 0 {
            return Err(Error::Metrics("confusion matrix is empty".into()));
        }
        let scores: Vec<ClassScore> = self
            .per_class()
            .into_iter()
            .enumerate()
            .filter(|(c, _)| !excluded.contains(c))
            .filter_map(|(_, s)| s)
            .collect();
        if scores.is_empty() {
            return Err(Error::Metrics("no class left to average".into()));
        }
        let n = scores.len() as f64;
        Ok(Summary {
            mf1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
            miou: scores.iter().map(|s| s.iou).sum::<f64>() / n,
            included: scores.len(),
        })
    }

    pub fn mf1(&self) -> Result<f64> {
        Ok(self.summary(&[])?.mf1)
    }

    pub fn miou(&self) -> Result<f64> {
        Ok(self.summary(&[])?.miou)
    }

    /// Fraction of labelled pixels predicted correctly.
    pub fn pixel_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Metrics("confusion matrix is empty".into()));
        }
        Ok(self.counts.diag().sum() as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mf1: f64,
    pub miou: f64,
    pub included: usize,
}

/// `100 (new - base) / base`, in percent.
pub fn relative_delta(base: f64, new: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::Metrics(format!("relative delta needs a positive base, got {base}")));
    }
    Ok(100.0 * (new - base) / base)
}

/// `new - base`, for scores already expressed in percent.
pub fn abs_delta_pp(base: f64, new: f64) -> f64 {
    new - base
}

/// Signed one-decimal percentage, e.g. `+11.7%`.
pub fn format_relative(delta: f64) -> String {
    let d = if delta.abs() < 0.05 { 0.0 } else { delta };
    format!("{}{:.1}%", if d >= 0.0 { "+" } else { "" }, d)
}

/// Signed percentage points with two decimals, e.g. `+6.40 pp`.
pub fn format_pp(delta: f64) -> String {
    let d = if delta.abs() < 0.005 { 0.0 } else { delta };
    format!("{}{:.2} pp", if d >= 0.0 { "+" } else { "" }, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cm(counts: Array2<u64>) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(counts, 255).unwrap()
    }

    #[test]
    fn hand_counted_update() {
        let mut m = ConfusionMatrix::new(2, 255);
        m.update(array![[0u32, 1], [1, 1]].view(), array![[0u32, 0], [1, 1]].view()).unwrap();
        assert_eq!(m.counts(), &array![[1u64, 1], [0, 2]]);
    }

    #[test]
    fn ignored_update_is_identity() {
        let mut m = ConfusionMatrix::new(3, 255);
        m.update(array![[0u32, 2]].view(), array![[255u32, 255]].view()).unwrap();
        assert_eq!(m.total(), 0);
        assert!(m.mf1().is_err());
    }

    #[test]
    fn out_of_range_prediction_errors() {
        let mut m = ConfusionMatrix::new(2, 255);
        assert!(m.update(array![[2u32]].view(), array![[0u32]].view()).is_err());
        assert!(m.update(array![[0u32, 1]].view(), array![[0u32]].view()).is_err());
    }

    #[test]
    fn hand_computed_scores() {
        let m = cm(array![[1, 1], [0, 2]]);
        let f1 = m.f1_per_class();
        assert!((f1[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1[1].unwrap() - 0.8).abs() < 1e-12);
        assert!((m.mf1().unwrap() - 11.0 / 15.0).abs() < 1e-12);
        let iou = m.iou_per_class();
        assert!((iou[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((iou[1].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.miou().unwrap() - 7.0 / 12.0).abs() < 1e-12);
        assert!((m.pixel_accuracy().unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn diagonal_is_perfect_and_absent_classes_excluded() {
        let m = cm(array![[5, 0, 0], [0, 3, 0], [0, 0, 0]]);
        assert_eq!(m.f1_per_class()[2], None);
        let s = m.summary(&[]).unwrap();
        assert_eq!((s.mf1, s.miou, s.included), (1.0, 1.0, 2));
    }

    #[test]
    fn excluded_classes_leave_the_means() {
        let m = cm(array![[1, 1], [0, 2]]);
        let s = m.summary(&[0]).unwrap();
        assert!((s.mf1 - 0.8).abs() < 1e-12);
        assert!(m.summary(&[0, 1]).is_err());
    }

    #[test]
    fn deltas() {
        assert!((relative_delta(54.67, 61.07).unwrap() - 11.7066).abs() < 1e-3);
        assert!(relative_delta(0.0, 1.0).is_err());
        assert!((abs_delta_pp(54.67, 61.07) - 6.4).abs() < 1e-9);
        assert_eq!(format_relative(relative_delta(54.67, 61.07).unwrap()), "+11.7%");
        assert_eq!(format_relative(-3.21), "-3.2%");
        assert_eq!(format_relative(0.0), "+0.0%");
        assert_eq!(format_pp(-0.001), "+0.00 pp");
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
        (prop::collection::vec(0u32..4, 64), prop::collection::vec(0u32..4, 64))
    }

    proptest! {
        #[test]
        fn f1_iou_identity_and_ordering((p, t) in arb_pair()) {
            let mut m = ConfusionMatrix::new(4, 255);
            let p = Array2::from_shape_vec((8, 8), p).unwrap();
            let t = Array2::from_shape_vec((8, 8), t).unwrap();
            m.update(p.view(), t.view()).unwrap();
            for s in m.per_class().into_iter().flatten() {
                prop_assert!((s.f1 - 2.0 * s.iou / (1.0 + s.iou)).abs() < 1e-12);
            }
            prop_assert!(m.mf1().unwrap() >= m.miou().unwrap());
        }

        #[test]
        fn any_partition_gives_the_same_matrix((p, t) in arb_pair(), split in 0usize..8) {
            let p = Array2::from_shape_vec((8, 8), p).unwrap();
            let t = Array2::from_shape_vec((8, 8), t).unwrap();
            let mut whole = ConfusionMatrix::new(4, 255);
            whole.update(p.view(), t.view()).unwrap();
            let mut a = ConfusionMatrix::new(4, 255);
            let mut b = ConfusionMatrix::new(4, 255);
            a.update(p.slice(ndarray::s![split.., ..]), t.slice(ndarray::s![split.., ..])).unwrap();
            b.update(p.slice(ndarray::s![..split, ..]), t.slice(ndarray::s![..split, ..])).unwrap();
            a.merge(&b).unwrap();
            prop_assert_eq!(a, whole);
        }

        #[test]
        fn class_permutation_keeps_means((p, t) in arb_pair(), rot in 1u32..4) {
            let p = Array2::from_shape_vec((8, 8), p).unwrap();
            let t = Array2::from_shape_vec((8, 8), t).unwrap();
            let perm = |x: &u32| (x + rot) % 4;
            let mut a = ConfusionMatrix::new(4, 255);
            let mut b = ConfusionMatrix::new(4, 255);
            a.update(p.view(), t.view()).unwrap();
            b.update(p.map(perm).view(), t.map(perm).view()).unwrap();
            prop_assert!((a.mf1().unwrap() - b.mf1().unwrap()).abs() < 1e-12);
            prop_assert!((a.miou().unwrap() - b.miou().unwrap()).abs() < 1e-12);
            let fa = a.f1_per_class();
            let fb = b.f1_per_class();
            for c in 0..4u32 {
                prop_assert_eq!(fa[c as usize], fb[perm(&c) as usize]);
            }
        }
    }
}
