//! Latent-class data model, contrastive tuple sampling, the flattened
//! auxiliary sample sets used by the covering arguments, and MNIST (IDX)
//! ingestion.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::DenseVector;

pub type ClassId = u32;

/// Classes with probability weights and an empirical sample pool per class.
#[derive(Debug, Clone)]
pub struct LatentClassModel {
    classes: Vec<ClassId>,
    rho: Vec<f64>,
    pools: Vec<Vec<DenseVector>>,
    dim: usize,
}

impl LatentClassModel {
    pub fn new(classes: Vec<ClassId>, rho: Vec<f64>, pools: Vec<Vec<DenseVector>>) -> Result<Self> {
        if classes.is_empty() {
            return invalid("latent class model needs at least one class");
        }
        if classes.len() != rho.len() || classes.len() != pools.len() {
            return invalid("classes, rho and pools must have equal length");
        }
        let mut sorted = classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != classes.len() {
            return invalid("duplicate class id");
        }
        if rho.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return invalid("rho must be nonnegative and finite");
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("rho sums to {total}, expected 1"));
        }
        if let Some(i) = pools.iter().position(Vec::is_empty) {
            return invalid(format!("pool for class {} is empty", classes[i]));
        }
        let dim = pools[0][0].dim();
        if pools.iter().flatten().any(|x| x.dim() != dim) {
            return invalid("pool samples differ in dimension");
        }
        Ok(Self {
            classes,
            rho,
            pools,
            dim,
        })
    }

    /// Uniform class weights.
    pub fn uniform(classes: Vec<ClassId>, pools: Vec<Vec<DenseVector>>) -> Result<Self> {
        let c = classes.len().max(1);
        let rho = vec![1.0 / c as f64; classes.len()];
        Self::new(classes, rho, pools)
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn pools(&self) -> &[Vec<DenseVector>] {
        &self.pools
    }

    pub fn pool(&self, class: ClassId) -> Option<&[DenseVector]> {
        self.index_of(class).map(|i| self.pools[i].as_slice())
    }

    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.classes.iter().position(|c| *c == class)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_samples(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    /// All samples with their class ids, in class order.
    pub fn labeled_samples(&self) -> impl Iterator<Item = (&DenseVector, ClassId)> {
        self.classes
            .iter()
            .zip(&self.pools)
            .flat_map(|(c, pool)| pool.iter().map(move |x| (x, *c)))
    }
}

/// Anchor, positive and `k` negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveTuple {
    pub anchor: DenseVector,
    pub positive: DenseVector,
    pub negatives: Vec<DenseVector>,
}

impl ContrastiveTuple {
    pub fn new(anchor: DenseVector, positive: DenseVector, negatives: Vec<DenseVector>) -> Result<Self> {
        if negatives.is_empty() {
            return invalid("tuple needs at least one negative");
        }
        let d = anchor.dim();
        if positive.dim() != d || negatives.iter().any(|x| x.dim() != d) {
            return invalid("tuple vectors differ in dimension");
        }
        Ok(Self {
            anchor,
            positive,
            negatives,
        })
    }

    pub fn k(&self) -> usize {
        self.negatives.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    /// The `k + 2` input vectors: anchor, positive, then negatives.
    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        [&self.anchor, &self.positive]
            .into_iter()
            .chain(self.negatives.iter())
            .map(|v| &v[..])
    }
}

#[derive(Debug, Clone)]
pub struct TupleDataset {
    tuples: Vec<ContrastiveTuple>,
    k: usize,
    dim: usize,
}

impl TupleDataset {
    pub fn new(tuples: Vec<ContrastiveTuple>, k: usize, dim: usize) -> Result<Self> {
        if k == 0 {
            return invalid("k must be at least 1");
        }
        if tuples.iter().any(|t| t.k() != k || t.dim() != dim) {
            return invalid("all tuples must share k and dimension");
        }
        Ok(Self { tuples, k, dim })
    }

    pub fn tuples(&self) -> &[ContrastiveTuple] {
        &self.tuples
    }

    pub fn n(&self) -> usize {
        self.tuples.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Subset by tuple indices (order preserved as given).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            tuples: idx.iter().map(|i| self.tuples[*i].clone()).collect(),
            k: self.k,
            dim: self.dim,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Redraw the positive until it differs (by pool index) from the anchor,
    /// when the pool has at least two samples.
    pub distinct_positive: bool,
}

pub fn sample_tuple<R: Rng + ?Sized>(model: &LatentClassModel, k: usize, rng: &mut R) -> Result<ContrastiveTuple> {
    sample_tuple_with(model, k, SamplingOptions::default(), rng)
}

pub fn sample_tuple_with<R: Rng + ?Sized>(
    model: &LatentClassModel,
    k: usize,
    opts: SamplingOptions,
    rng: &mut R,
) -> Result<ContrastiveTuple> {
    if model.classes.len() < 2 {
        return Err(Error::UnsupportedModel(
            "negative sampling needs at least two classes".into(),
        ));
    }
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let anchor_dist =
        WeightedIndex::new(&model.rho).map_err(|e| Error::UnsupportedModel(format!("bad rho: {e}")))?;
    let c = anchor_dist.sample(rng);
    let pool = &model.pools[c];
    let ia = rng.gen_range(0..pool.len());
    let mut ip = rng.gen_range(0..pool.len());
    if opts.distinct_positive && pool.len() > 1 {
        while ip == ia {
            ip = rng.gen_range(0..pool.len());
        }
    }

    // Negative class distribution: rho restricted to z != c and renormalized;
    // uniform over the other classes when that mass is zero.
    let mut weights = model.rho.clone();
    weights[c] = 0.0;
    if weights.iter().sum::<f64>() <= 0.0 {
        weights = (0..model.classes.len()).map(|z| if z == c { 0.0 } else { 1.0 }).collect();
    }
    let neg_dist = WeightedIndex::new(&weights).expect("nonzero negative weights");
    let negatives = (0..k)
        .map(|_| {
            let z = neg_dist.sample(rng);
            let p = &model.pools[z];
            p[rng.gen_range(0..p.len())].clone()
        })
        .collect();
    Ok(ContrastiveTuple {
        anchor: pool[ia].clone(),
        positive: pool[ip].clone(),
        negatives,
    })
}

pub fn build_dataset(model: &LatentClassModel, n: usize, k: usize, seed: u64) -> Result<TupleDataset> {
    build_dataset_with(model, n, k, SamplingOptions::default(), seed)
}

pub fn build_dataset_with(
    model: &LatentClassModel,
    n: usize,
    k: usize,
    opts: SamplingOptions,
    seed: u64,
) -> Result<TupleDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = (0..n)
        .map(|_| sample_tuple_with(model, k, opts, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    TupleDataset::new(tuples, k, model.dim())
}

/// Triplets `(x_j, x_j⁺, x_ji⁻)` in `(j, i)` lexicographic order; `n·k` entries.
pub fn auxiliary_s1(ds: &TupleDataset) -> Vec<(&[f64], &[f64], &[f64])> {
    ds.tuples
        .iter()
        .flat_map(|t| t.negatives.iter().map(move |neg| (&t.anchor[..], &t.positive[..], &neg[..])))
        .collect()
}

/// Every input vector of every tuple, tuple order preserved, duplicates kept;
/// `n·(k+2)` entries.
pub fn auxiliary_s2(ds: &TupleDataset) -> Vec<&[f64]> {
    ds.tuples.iter().flat_map(ContrastiveTuple::inputs).collect()
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset,
            message: "truncated header".into(),
        })
}

/// Parses an IDX3 image file into flattened pixel vectors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<DenseVector>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}"),
        });
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let needed = 16 + count * size;
    if bytes.len() < needed {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("truncated pixel data: expected {needed} bytes"),
        });
    }
    Ok(bytes[16..needed]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| DenseVector::from(px.iter().map(|p| f64::from(*p) / 255.0).collect::<Vec<_>>()))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}"),
        });
    }
    let count = read_be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("truncated label data: expected {} bytes", 8 + count),
        });
    }
    Ok(bytes[8..8 + count].to_vec())
}

/// Groups parsed images by label; absent labels get no pool. Uniform rho.
pub fn model_from_idx(images_bytes: &[u8], labels_bytes: &[u8]) -> Result<LatentClassModel> {
    let images = parse_idx_images(images_bytes)?;
    let labels = parse_idx_labels(labels_bytes)?;
    if images.len() != labels.len() {
        return Err(Error::Format {
            offset: 4,
            message: format!("{} images but {} labels", images.len(), labels.len()),
        });
    }
    let mut classes: Vec<ClassId> = labels.iter().map(|l| ClassId::from(*l)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut pools: Vec<Vec<DenseVector>> = vec![Vec::new(); classes.len()];
    for (img, l) in images.into_iter().zip(&labels) {
        let i = classes.binary_search(&ClassId::from(*l)).expect("class present");
        pools[i].push(img);
    }
    LatentClassModel::uniform(classes, pools)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LatentClassModel> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    model_from_idx(&images, &labels)
}

/// Per-class shuffled split. Classes with a single sample stay on the train
/// side only; rho is renormalized over the classes present on each side.
pub fn train_test_split(
    model: &LatentClassModel,
    fraction: f64,
    seed: u64,
) -> Result<(LatentClassModel, LatentClassModel)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("split fraction {fraction} outside (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = (Vec::new(), Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new(), Vec::new());
    for ((c, rho), pool) in model.classes.iter().zip(&model.rho).zip(&model.pools) {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(&mut rng);
        let size = pool.len();
        let n_train = if size >= 2 {
            ((fraction * size as f64).round() as usize).clamp(1, size - 1)
        } else {
            size
        };
        let n_train = if fraction >= 1.0 { size } else { n_train };
        train.0.push(*c);
        train.1.push(*rho);
        train.2.push(idx[..n_train].iter().map(|i| pool[*i].clone()).collect());
        if n_train < size {
            test.0.push(*c);
            test.1.push(*rho);
            test.2.push(idx[n_train..].iter().map(|i| pool[*i].clone()).collect());
        }
    }
    if test.0.is_empty() {
        return invalid("split leaves every test pool empty");
    }
    let renorm = |w: Vec<f64>| -> Vec<f64> {
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / w.len() as f64; w.len()]
        }
    };
    let train = LatentClassModel::new(train.0, renorm(train.1), train.2)?;
    let test = LatentClassModel::new(test.0, renorm(test.1), test.2)?;
    Ok((train, test))
}

/// Isotropic Gaussian blobs with class means `scale·e_c` on a scaled simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub sigma: f64,
    pub scale: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 16,
            per_class: 100,
            sigma: 0.2,
            scale: 2.0,
        }
    }
}

pub fn gaussian_blobs(spec: &BlobSpec, seed: u64) -> Result<LatentClassModel> {
    if spec.classes == 0 || spec.per_class == 0 {
        return invalid("blobs need at least one class and one sample per class");
    }
    if spec.dim < spec.classes {
        return invalid("blob dimension must be at least the number of classes");
    }
    if !(spec.sigma >= 0.0) || !spec.scale.is_finite() {
        return invalid("blob sigma must be nonnegative and scale finite");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools = (0..spec.classes)
        .map(|c| {
            (0..spec.per_class)
                .map(|_| {
                    let v: Vec<f64> = (0..spec.dim)
                        .map(|i| {
                            let mean = if i == c { spec.scale } else { 0.0 };
                            let z: f64 = StandardNormal.sample(&mut rng);
                            mean + spec.sigma * z
                        })
                        .collect();
                    DenseVector::from(v)
                })
                .collect()
        })
        .collect();
    LatentClassModel::uniform((0..spec.classes as ClassId).collect(), pools)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_model(rho: Vec<f64>) -> LatentClassModel {
        let pools = vec![
            vec![DenseVector::from(vec![1.0, 0.0]), DenseVector::from(vec![1.5, 0.0])],
            vec![DenseVector::from(vec![0.0, 1.0])],
        ];
        LatentClassModel::new(vec![1, 2], rho, pools).unwrap()
    }

    #[test]
    fn degenerate_rho_forces_other_class_negatives() {
        let m = two_class_model(vec![1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t = sample_tuple(&m, 3, &mut rng).unwrap();
            assert!(t.anchor[0] >= 1.0);
            assert!(t.negatives.iter().all(|x| x[..] == [0.0, 1.0]));
        }
    }

    #[test]
    fn single_class_is_unsupported() {
        let m = LatentClassModel::uniform(vec![0], vec![vec![DenseVector::from(vec![1.0])]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_tuple(&m, 1, &mut rng), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = two_class_model(vec![0.5, 0.5]);
        let a = build_dataset(&m, 20, 4, 9).unwrap();
        let b = build_dataset(&m, 20, 4, 9).unwrap();
        assert_eq!(a.tuples(), b.tuples());
    }

    #[test]
    fn distinct_positive_option() {
        let m = two_class_model(vec![1.0, 0.0]);
        let ds = build_dataset_with(&m, 50, 1, SamplingOptions { distinct_positive: true }, 1).unwrap();
        assert!(ds.tuples().iter().all(|t| t.anchor != t.positive));
    }

    #[test]
    fn dataset_shapes() {
        let m = two_class_model(vec![0.5, 0.5]);
        assert_eq!(build_dataset(&m, 0, 2, 1).unwrap().n(), 0);
        let ds = build_dataset(&m, 100, 10, 1).unwrap();
        assert_eq!(ds.n(), 100);
        assert!(ds.tuples().iter().all(|t| t.k() == 10));
        let ds = build_dataset(&m, 2, 3, 1).unwrap();
        assert_eq!(auxiliary_s1(&ds).len(), 6);
        let ds = build_dataset(&m, 1, 1, 1).unwrap();
        assert_eq!(auxiliary_s2(&ds).len(), 3);
        let ds = build_dataset(&m, 2, 10, 1).unwrap();
        assert_eq!(auxiliary_s2(&ds).len(), 24);
    }

    #[test]
    fn model_validation() {
        let p = || vec![vec![DenseVector::from(vec![1.0])], vec![DenseVector::from(vec![2.0])]];
        assert!(LatentClassModel::new(vec![0, 1], vec![0.6, 0.6], p()).is_err());
        assert!(LatentClassModel::new(vec![0, 0], vec![0.5, 0.5], p()).is_err());
        assert!(LatentClassModel::new(vec![0, 1], vec![0.5, 0.5], vec![vec![], vec![]]).is_err());
        let ten = LatentClassModel::uniform((0..10).collect(), (0..10).map(|_| p()[0].clone()).collect());
        assert!(ten.is_ok());
    }

    #[test]
    fn split_counts_and_rejection() {
        let pools: Vec<Vec<DenseVector>> = (0..3)
            .map(|c| (0..100).map(|i| DenseVector::from(vec![c as f64, i as f64])).collect())
            .collect();
        let m = LatentClassModel::uniform(vec![0, 1, 2], pools).unwrap();
        let (tr, te) = train_test_split(&m, 0.75, 4).unwrap();
        assert!(tr.pools().iter().all(|p| p.len() == 75));
        assert!(te.pools().iter().all(|p| p.len() == 25));
        let (tr2, _) = train_test_split(&m, 0.75, 4).unwrap();
        assert_eq!(tr.pools()[0], tr2.pools()[0]);
        assert!(train_test_split(&m, 1.0, 4).is_err());
        assert!(train_test_split(&m, 0.0, 4).is_err());
    }

    #[test]
    fn idx_errors() {
        let mut bad = vec![0u8, 0, 8, 4];
        bad.extend_from_slice(&[0; 12]);
        match parse_idx_images(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        // header claims one 2x2 image, only 3 pixel bytes present
        let mut trunc = vec![0u8, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        trunc.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(parse_idx_images(&trunc), Err(Error::Format { .. })));
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn blobs_shape() {
        let spec = BlobSpec {
            classes: 3,
            dim: 5,
            per_class: 7,
            sigma: 0.1,
            scale: 2.0,
        };
        let m = gaussian_blobs(&spec, 1).unwrap();
        assert_eq!(m.num_samples(), 21);
        assert_eq!(m.dim(), 5);
        assert!(gaussian_blobs(&BlobSpec { dim: 2, ..spec }, 1).is_err());
    }
}
