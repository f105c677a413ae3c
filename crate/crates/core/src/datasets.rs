//! Dataset generation, ingestion, and normalization.
//!
//! `generate_synsep` builds a linearly separable multiclass set together
//! with a planted separator certifying zero hinge loss and margin at
//! least one, which the mistake-bound checks rely on. Loaders cover a
//! plain CSV schema (first column 1-based label, rest features) and the
//! IDX binary convention used by the MNIST family.

use crate::error::{CoreError, DataError};
use crate::linear_model::{Example, Label, WeightMatrix};
use crate::seeding::RngStream;
use rand::seq::SliceRandom;
use rand::Rng;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// An immutable labeled dataset with consistent dimensions.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub classes: usize,
    pub dims: usize,
    pub name: String,
    /// The scalar the features were divided by during normalization
    /// (1.0 when untouched).
    pub norm_scale: f64,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, classes: usize, dims: usize, name: &str) -> Self {
        Dataset {
            examples,
            classes,
            dims,
            name: name.to_string(),
            norm_scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Largest feature-vector norm in the dataset.
    pub fn max_norm(&self) -> f64 {
        self.examples.iter().map(Example::norm).fold(0.0, f64::max)
    }

    /// A deterministic uniform permutation of the examples.
    pub fn shuffled(&self, rng: &mut RngStream) -> Vec<&Example> {
        let mut refs: Vec<&Example> = self.examples.iter().collect();
        refs.shuffle(rng);
        refs
    }

    /// Writes the CSV schema understood by [`load_csv`]. Floats use the
    /// shortest decimal form that round-trips exactly.
    pub fn save_csv(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut out = std::io::BufWriter::new(file);
        let io_err = |source| DataError::Io {
            path: path.display().to_string(),
            source,
        };
        for ex in &self.examples {
            write!(out, "{}", ex.label).map_err(io_err)?;
            for v in &ex.features {
                write!(out, ",{v}").map_err(io_err)?;
            }
            writeln!(out).map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }
}

/// Scales every feature vector by the dataset's maximum Euclidean norm
/// when that maximum exceeds one; geometry within the dataset is
/// preserved. The division repeats if rounding leaves a norm a hair
/// above one, so the returned dataset always satisfies `norm <= 1`.
pub fn normalize(mut ds: Dataset) -> Dataset {
    let max = ds.max_norm();
    if max == 0.0 {
        ds.norm_scale = 1.0;
        return ds;
    }
    ds.norm_scale = max;
    let mut current = max;
    while current > 1.0 {
        for ex in &mut ds.examples {
            for v in &mut ex.features {
                *v /= current;
            }
        }
        current = ds.max_norm();
    }
    ds
}

/// Parameters for the separable synthetic generator.
#[derive(Debug, Clone)]
pub struct SynSepSpec {
    pub classes: usize,
    pub dims: usize,
    pub size: usize,
    pub seed: u64,
    /// Dimensions reserved for class-independent noise coordinates.
    pub noise_dims: usize,
    /// Coordinates activated inside the example's class block.
    pub block_active: usize,
    /// Coordinates activated inside the shared noise block.
    pub noise_active: usize,
}

impl Default for SynSepSpec {
    fn default() -> Self {
        SynSepSpec {
            classes: 9,
            dims: 400,
            size: 100_000,
            seed: 0,
            noise_dims: 40,
            block_active: 20,
            noise_active: 5,
        }
    }
}

impl SynSepSpec {
    fn block_dims(&self) -> Result<usize, CoreError> {
        if self.classes < 2 {
            return Err(CoreError::param("classes", "need at least two classes"));
        }
        if self.size == 0 {
            return Err(CoreError::param("size", "must be positive"));
        }
        if self.noise_dims >= self.dims {
            return Err(CoreError::param(
                "noise_dims",
                "must leave room for class blocks",
            ));
        }
        let usable = self.dims - self.noise_dims;
        if !usable.is_multiple_of(self.classes) {
            return Err(CoreError::param(
                "dims",
                format!(
                    "dims - noise_dims = {usable} must divide evenly into {} class blocks",
                    self.classes
                ),
            ));
        }
        let block = usable / self.classes;
        if self.block_active == 0 || self.block_active > block {
            return Err(CoreError::param(
                "block_active",
                format!("must lie in [1, {block}]"),
            ));
        }
        if self.noise_active > self.noise_dims {
            return Err(CoreError::param(
                "noise_active",
                "exceeds the noise block size",
            ));
        }
        Ok(block)
    }
}

/// Generates the separable synthetic dataset and its planted separator.
///
/// Each class owns a disjoint block of coordinates; an example activates
/// `block_active` random coordinates of its class block and
/// `noise_active` random coordinates of a shared noise block, then is
/// scaled to unit norm. The planted matrix puts uniform weight on each
/// class block and is rescaled until the minimum margin is at least one,
/// so the returned pair certifies zero hinge loss on every example.
pub fn generate_synsep(
    spec: &SynSepSpec,
    rng: &mut RngStream,
) -> Result<(Dataset, WeightMatrix), CoreError> {
    let block = spec.block_dims()?;
    let noise_start = spec.classes * block;

    let mut examples = Vec::with_capacity(spec.size);
    let mut block_slots: Vec<usize> = (0..block).collect();
    let mut noise_slots: Vec<usize> = (0..spec.noise_dims).collect();
    for _ in 0..spec.size {
        let label = Label::from_index(rng.random_range(0..spec.classes));
        let mut features = vec![0.0; spec.dims];
        block_slots.shuffle(rng);
        for &slot in block_slots.iter().take(spec.block_active) {
            features[label.index() * block + slot] = 1.0;
        }
        noise_slots.shuffle(rng);
        for &slot in noise_slots.iter().take(spec.noise_active) {
            features[noise_start + slot] = 1.0;
        }
        examples.push(Example::new(features, label));
    }

    let ds = normalize(Dataset::new(examples, spec.classes, spec.dims, "synsep"));

    // Plant uniform weight on each class block, then scale until every
    // margin clears 1 despite rounding.
    let min_margin = |w: &WeightMatrix| -> f64 {
        ds.examples
            .iter()
            .map(|ex| {
                let scores = w.scores(&ex.features).expect("consistent dims");
                let own = scores[ex.label.index()];
                let rival = scores
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != ex.label.index())
                    .map(|(_, &s)| s)
                    .fold(f64::NEG_INFINITY, f64::max);
                own - rival
            })
            .fold(f64::INFINITY, f64::min)
    };

    let build = |weight: f64| -> WeightMatrix {
        let mut w = WeightMatrix::zeros(spec.classes, spec.dims);
        for r in 0..spec.classes {
            for j in 0..block {
                w.set_entry(r, r * block + j, weight);
            }
        }
        w
    };

    let raw_margin = min_margin(&build(1.0));
    debug_assert!(raw_margin > 0.0);
    let mut weight = 1.0 / raw_margin;
    let planted = loop {
        let candidate = build(weight);
        if min_margin(&candidate) >= 1.0 {
            break candidate;
        }
        weight *= 1.0 + 4.0 * f64::EPSILON;
    };

    Ok((ds, planted))
}

/// Loads the plain CSV schema: first column an integer 1-based label,
/// remaining columns real features. The class count is the maximum label
/// seen and the dimension is the column count minus one.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv_reader(BufReader::new(file), &path.display().to_string())
}

fn parse_csv_reader<R: BufRead>(reader: R, path: &str) -> Result<Dataset, DataError> {
    let mut examples = Vec::new();
    let mut dims: Option<usize> = None;
    let mut classes = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(DataError::Schema {
                path: path.to_string(),
                line: line_no,
                expected: dims.map(|d| d + 1).unwrap_or(2),
                got: fields.len(),
            });
        }
        let width = fields.len() - 1;
        match dims {
            None => dims = Some(width),
            Some(d) if d != width => {
                return Err(DataError::Schema {
                    path: path.to_string(),
                    line: line_no,
                    expected: d + 1,
                    got: fields.len(),
                })
            }
            _ => {}
        }
        let label: usize = fields[0].trim().parse().map_err(|_| DataError::Parse {
            path: path.to_string(),
            line: line_no,
            reason: format!("label `{}` is not a positive integer", fields[0]),
        })?;
        if label == 0 {
            return Err(DataError::Parse {
                path: path.to_string(),
                line: line_no,
                reason: "labels are 1-based; got 0".to_string(),
            });
        }
        classes = classes.max(label);
        let mut features = Vec::with_capacity(width);
        for field in &fields[1..] {
            let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                path: path.to_string(),
                line: line_no,
                reason: format!("feature `{field}` is not a number"),
            })?;
            features.push(v);
        }
        examples.push(Example::new(features, Label::new(label)));
    }
    if examples.is_empty() {
        return Err(DataError::Empty {
            path: path.to_string(),
        });
    }
    let dims = dims.unwrap();
    let name = Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string());
    Ok(Dataset::new(examples, classes.max(2), dims, &name))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image/label file pair (the MNIST binary convention).
/// Pixels are flattened row-major and scaled by 1/255; label bytes are
/// shifted to 1-based.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images_raw = read_all(images_path)?;
    let labels_raw = read_all(labels_path)?;

    let images_name = images_path.display().to_string();
    let labels_name = labels_path.display().to_string();

    let magic = read_be_u32(&images_raw, 0, &images_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_name,
            expected: IDX_IMAGES_MAGIC,
            observed: magic,
        });
    }
    let magic = read_be_u32(&labels_raw, 0, &labels_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_name,
            expected: IDX_LABELS_MAGIC,
            observed: magic,
        });
    }

    let image_count = read_be_u32(&images_raw, 4, &images_name)? as usize;
    let rows = read_be_u32(&images_raw, 8, &images_name)? as usize;
    let cols = read_be_u32(&images_raw, 12, &images_name)? as usize;
    let label_count = read_be_u32(&labels_raw, 4, &labels_name)? as usize;
    if image_count != label_count {
        return Err(DataError::CountMismatch {
            images: image_count,
            labels: label_count,
        });
    }

    let dims = rows * cols;
    let expected_pixels = 16 + image_count * dims;
    if images_raw.len() < expected_pixels {
        return Err(DataError::Truncated {
            path: images_name,
            expected: expected_pixels,
            got: images_raw.len(),
        });
    }
    let expected_labels = 8 + label_count;
    if labels_raw.len() < expected_labels {
        return Err(DataError::Truncated {
            path: labels_name,
            expected: expected_labels,
            got: labels_raw.len(),
        });
    }

    let mut examples = Vec::with_capacity(image_count);
    let mut classes = 2usize;
    for i in 0..image_count {
        let start = 16 + i * dims;
        let features: Vec<f64> = images_raw[start..start + dims]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        let label = Label::new(labels_raw[8 + i] as usize + 1);
        classes = classes.max(label.get());
        examples.push(Example::new(features, label));
    }
    if examples.is_empty() {
        return Err(DataError::Empty { path: images_name });
    }
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| images_name.clone());
    Ok(Dataset::new(examples, classes, dims, &name))
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn read_be_u32(raw: &[u8], offset: usize, path: &str) -> Result<u32, DataError> {
    let end = offset + 4;
    if raw.len() < end {
        return Err(DataError::Truncated {
            path: path.to_string(),
            expected: end,
            got: raw.len(),
        });
    }
    Ok(u32::from_be_bytes(raw[offset..end].try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_model::hinge_loss;
    use crate::seeding::{substream, STREAM_SHUFFLE};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn small_spec(size: usize, seed: u64) -> SynSepSpec {
        SynSepSpec {
            size,
            seed,
            ..SynSepSpec::default()
        }
    }

    #[test]
    fn synsep_shape_and_certificate() {
        let spec = small_spec(500, 7);
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        let (ds, planted) = generate_synsep(&spec, &mut rng).unwrap();
        assert_eq!(ds.len(), 500);
        assert_eq!(ds.classes, 9);
        assert_eq!(ds.dims, 400);
        for ex in &ds.examples {
            assert!(ex.norm() <= 1.0, "norm {}", ex.norm());
            assert_eq!(hinge_loss(&planted, ex).unwrap(), 0.0);
        }
    }

    #[test]
    fn synsep_margin_at_least_one() {
        let spec = small_spec(300, 3);
        let mut rng = substream(spec.seed, STREAM_SHUFFLE);
        let (ds, planted) = generate_synsep(&spec, &mut rng).unwrap();
        for ex in &ds.examples {
            let scores = planted.scores(&ex.features).unwrap();
            let own = scores[ex.label.index()];
            let rival = scores
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != ex.label.index())
                .map(|(_, &s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(own - rival >= 1.0);
        }
    }

    #[test]
    fn synsep_rejects_zero_size() {
        let spec = small_spec(0, 1);
        let mut rng = substream(1, STREAM_SHUFFLE);
        assert!(generate_synsep(&spec, &mut rng).is_err());
    }

    #[test]
    fn normalize_divides_by_max() {
        let ds = Dataset::new(
            vec![
                Example::new(vec![2.0, 0.0], Label::new(1)),
                Example::new(vec![0.0, 1.0], Label::new(2)),
            ],
            2,
            2,
            "t",
        );
        let out = normalize(ds);
        assert_eq!(out.norm_scale, 2.0);
        assert_eq!(out.examples[0].norm(), 1.0);
        assert_eq!(out.examples[1].norm(), 0.5);
    }

    #[test]
    fn normalize_leaves_small_data_alone() {
        let ds = Dataset::new(
            vec![Example::new(vec![0.3, 0.4], Label::new(1))],
            2,
            2,
            "t",
        );
        let out = normalize(ds);
        assert_eq!(out.norm_scale, 0.5);
        assert_eq!(out.examples[0].features, vec![0.3, 0.4]);
    }

    #[test]
    fn normalize_zero_dataset_identity() {
        let ds = Dataset::new(
            vec![Example::new(vec![0.0, 0.0], Label::new(1))],
            2,
            2,
            "t",
        );
        let out = normalize(ds);
        assert_eq!(out.norm_scale, 1.0);
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let ds = Dataset::new(
            (1..=8)
                .map(|i| Example::new(vec![i as f64], Label::new(1 + i % 2)))
                .collect(),
            2,
            1,
            "t",
        );
        let a: Vec<f64> = ds
            .shuffled(&mut substream(5, STREAM_SHUFFLE))
            .iter()
            .map(|e| e.features[0])
            .collect();
        let b: Vec<f64> = ds
            .shuffled(&mut substream(5, STREAM_SHUFFLE))
            .iter()
            .map(|e| e.features[0])
            .collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, (1..=8).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn shuffle_singleton() {
        let ds = Dataset::new(vec![Example::new(vec![1.0], Label::new(1))], 2, 1, "t");
        let order = ds.shuffled(&mut substream(1, STREAM_SHUFFLE));
        assert_eq!(order.len(), 1);
    }

    #[test]
    fn csv_parses_schema() {
        let ds = parse_csv_reader(Cursor::new("2,0.5,0.25\n1,1.0,0.0\n"), "inline").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.classes, 2);
        assert_eq!(ds.dims, 2);
        assert_eq!(ds.examples[0].label, Label::new(2));
    }

    #[test]
    fn csv_empty_file_is_error() {
        assert!(matches!(
            parse_csv_reader(Cursor::new(""), "inline"),
            Err(DataError::Empty { .. })
        ));
    }

    #[test]
    fn csv_bad_label_names_line() {
        match parse_csv_reader(Cursor::new("x,1,2\n"), "inline") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_inconsistent_width_is_schema_error() {
        match parse_csv_reader(Cursor::new("1,1.0,2.0\n2,1.0\n"), "inline") {
            Err(DataError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    fn idx_files(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("imgs.idx");
        let lp = dir.join("labs.idx");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        v.extend(count.to_be_bytes());
        v.extend(rows.to_be_bytes());
        v.extend(cols.to_be_bytes());
        v.extend(pixels);
        v
    }

    fn idx_labels(count: u32, labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_LABELS_MAGIC.to_be_bytes());
        v.extend(count.to_be_bytes());
        v.extend(labels);
        v
    }

    #[test]
    fn idx_roundtrip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_files(
            dir.path(),
            &idx_images(1, 2, 2, &[0, 255, 128, 0]),
            &idx_labels(1, &[3]),
        );
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dims, 4);
        assert_eq!(
            ds.examples[0].features,
            vec![0.0, 1.0, 128.0 / 255.0, 0.0]
        );
        assert_eq!(ds.examples[0].label, Label::new(4));
    }

    #[test]
    fn idx_bad_magic_reports_observed_value() {
        let dir = tempfile::tempdir().unwrap();
        let mut images = idx_images(1, 1, 1, &[7]);
        images[3] = 0x99;
        let (ip, lp) = idx_files(dir.path(), &images, &idx_labels(1, &[0]));
        match load_idx(&ip, &lp) {
            Err(DataError::BadMagic { observed, .. }) => assert_eq!(observed, 0x0000_0899),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn idx_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_files(
            dir.path(),
            &idx_images(2, 1, 1, &[1, 2]),
            &idx_labels(1, &[0]),
        );
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
    }

    #[test]
    fn idx_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_files(
            dir.path(),
            &idx_images(2, 2, 2, &[1, 2, 3]),
            &idx_labels(2, &[0, 1]),
        );
        assert!(matches!(load_idx(&ip, &lp), Err(DataError::Truncated { .. })));
    }

    proptest! {
        #[test]
        fn csv_roundtrip_exact(
            rows in proptest::collection::vec(
                (1usize..5, proptest::collection::vec(-1e3f64..1e3, 3)),
                1..20,
            )
        ) {
            let examples: Vec<Example> = rows
                .iter()
                .map(|(l, f)| Example::new(f.clone(), Label::new(*l)))
                .collect();
            let classes = rows.iter().map(|(l, _)| *l).max().unwrap().max(2);
            let ds = Dataset::new(examples, classes, 3, "prop");
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("prop.csv");
            ds.save_csv(&path).unwrap();
            let back = load_csv(&path).unwrap();
            prop_assert_eq!(back.len(), ds.len());
            for (a, b) in back.examples.iter().zip(&ds.examples) {
                prop_assert_eq!(a.label, b.label);
                prop_assert_eq!(&a.features, &b.features);
            }
        }

        #[test]
        fn normalize_idempotent_and_bounded(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 4),
                1..12,
            )
        ) {
            let examples: Vec<Example> = rows
                .iter()
                .map(|f| Example::new(f.clone(), Label::new(1)))
                .collect();
            let once = normalize(Dataset::new(examples, 2, 4, "prop"));
            prop_assert!(once.max_norm() <= 1.0);
            let twice = normalize(once.clone());
            for (a, b) in once.examples.iter().zip(&twice.examples) {
                prop_assert_eq!(&a.features, &b.features);
            }
        }
    }
}
