//! Labelled feature tables: a CSV with header `class,f0,f1,...,f{d-1}`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    classes: Vec<usize>,
    rows: Vec<DVector<f64>>,
    by_class: Vec<Vec<usize>>,
}

impl FeatureTable {
    pub fn new(classes: Vec<usize>, rows: Vec<DVector<f64>>) -> Result<Self> {
        if rows.is_empty() || rows.len() != classes.len() {
            return Err(Error::Input("feature table needs one class label per row and at least one row".into()));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Input("feature rows have inconsistent dimension".into()));
        }
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Input("feature table has non-finite entries".into()));
        }
        let num_classes = classes.iter().max().map_or(0, |m| m + 1);
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &c) in classes.iter().enumerate() {
            by_class[c].push(i);
        }
        Ok(FeatureTable {
            dim,
            classes,
            rows,
            by_class,
        })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Config(format!("feature file header: {e}")))?
            .clone();
        if header.get(0) != Some("class") || header.len() < 2 {
            return Err(Error::Config("feature file header must be `class,f0,f1,...`".into()));
        }
        for (j, name) in header.iter().skip(1).enumerate() {
            if name != format!("f{j}") {
                return Err(Error::Config(format!("feature column {} should be named f{j}, found `{name}`", j + 1)));
            }
        }
        let mut classes = Vec::new();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(format!("feature file row {}: {e}", line + 2)))?;
            let bad = |what: &str| Error::Config(format!("feature file row {}: bad {what}", line + 2));
            classes.push(rec[0].parse::<usize>().map_err(|_| bad("class label"))?);
            let feats = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| bad("feature value")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(DVector::from_vec(feats));
        }
        Self::new(classes, rows).map_err(|e| Error::Config(format!("feature file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("class");
        for j in 0..self.dim {
            header.push_str(&format!(",f{j}"));
        }
        writeln!(w, "{header}")?;
        for (c, row) in self.classes.iter().zip(&self.rows) {
            write!(w, "{c}")?;
            for v in row.iter() {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One more than the largest class label.
    pub fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    pub fn class(&self, i: usize) -> usize {
        self.classes[i]
    }

    pub fn row(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn rows_of_class(&self, c: usize) -> &[usize] {
        self.by_class.get(c).map_or(&[], |v| v.as_slice())
    }

    /// Errors unless every class label below `num_classes()` has a row.
    pub fn check_all_classes_present(&self) -> Result<()> {
        match self.by_class.iter().position(|v| v.is_empty()) {
            Some(c) => Err(Error::Config(format!("feature table has no rows of class {c}"))),
            None => Ok(()),
        }
    }
}

/// Synthetic table: `num_classes` random unit-norm centres in `R^dim`, and
/// `per_class` rows per class drawn as centre plus isotropic noise of sd
/// `spread`.
pub fn synthetic_feature_table<R: Rng + ?Sized>(
    dim: usize,
    num_classes: usize,
    per_class: usize,
    spread: f64,
    rng: &mut R,
) -> Result<FeatureTable> {
    use rand_distr::StandardNormal;
    if dim == 0 || num_classes == 0 || per_class == 0 {
        return Err(Error::Input("synthetic feature table sizes must be positive".into()));
    }
    let centres: Vec<DVector<f64>> = (0..num_classes)
        .map(|_| {
            let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            v / n
        })
        .collect();
    let mut classes = Vec::with_capacity(num_classes * per_class);
    let mut rows = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for (c, centre) in centres.iter().enumerate() {
            classes.push(c);
            rows.push(centre + DVector::from_fn(dim, |_, _| spread * rng.sample::<f64, _>(StandardNormal)));
        }
    }
    FeatureTable::new(classes, rows)
}
