use ndarray::{Array2, ArrayView1, Axis};

use crate::{Error, Result};

/// Greyscale images flattened row-major into the rows of a matrix, with
/// optional class labels and domain tags. Domain tags index
/// `domain_names` and are only ever used for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    images: Array2<f64>,
    height: usize,
    width: usize,
    labels: Option<Vec<u8>>,
    domains: Option<Vec<u16>>,
    domain_names: Vec<String>,
}

impl ImageSet {
    pub fn new(images: Array2<f64>, height: usize, width: usize) -> Result<Self> {
        if images.ncols() != height * width {
            return Err(Error::contract(format!(
                "{}x{} images need {} columns, got {}",
                height,
                width,
                height * width,
                images.ncols()
            )));
        }
        if let Some(bad) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            images,
            height,
            width,
            labels: None,
            domains: None,
            domain_names: Vec::new(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::contract(format!(
                "{} labels for {} images",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Tags every image with a single domain.
    pub fn with_domain(mut self, name: &str) -> Self {
        self.domains = Some(vec![0; self.len()]);
        self.domain_names = vec![name.to_string()];
        self
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn images(&self) -> &Array2<f64> {
        &self.images
    }

    pub fn image(&self, i: usize) -> ArrayView1<'_, f64> {
        self.images.row(i)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn domains(&self) -> Option<&[u16]> {
        self.domains.as_deref()
    }

    pub fn domain_names(&self) -> &[String] {
        &self.domain_names
    }

    pub fn domain_name(&self, i: usize) -> Option<&str> {
        self.domains
            .as_ref()
            .map(|d| self.domain_names[d[i] as usize].as_str())
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m as usize + 1)
    }

    /// Rows gathered at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            images: self.images.select(Axis(0), indices),
            height: self.height,
            width: self.width,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            domains: self
                .domains
                .as_ref()
                .map(|d| indices.iter().map(|&i| d[i]).collect()),
            domain_names: self.domain_names.clone(),
        }
    }

    /// Stacks sets of equal image size. Domain names are merged by name;
    /// labels survive only when every part has them.
    pub fn concat(parts: &[ImageSet]) -> Result<ImageSet> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("cannot concatenate zero image sets"))?;
        if parts
            .iter()
            .any(|p| p.height != first.height || p.width != first.width)
        {
            return Err(Error::contract("cannot concatenate images of different sizes"));
        }
        let views: Vec<_> = parts.iter().map(|p| p.images.view()).collect();
        let images = ndarray::concatenate(Axis(0), &views).expect("equal widths");
        let labels = parts
            .iter()
            .map(|p| p.labels.clone())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat());
        let mut names: Vec<String> = Vec::new();
        let mut domains = Some(Vec::with_capacity(images.nrows()));
        for p in parts {
            match (&p.domains, domains.as_mut()) {
                (Some(tags), Some(out)) => {
                    for &t in tags {
                        let name = &p.domain_names[t as usize];
                        let idx = match names.iter().position(|n| n == name) {
                            Some(i) => i,
                            None => {
                                names.push(name.clone());
                                names.len() - 1
                            }
                        };
                        out.push(idx as u16);
                    }
                }
                _ => domains = None,
            }
        }
        if domains.is_none() {
            names.clear();
        }
        Ok(ImageSet {
            images,
            height: first.height,
            width: first.width,
            labels,
            domains,
            domain_names: names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_out_of_range_pixels_and_label_mismatch() {
        assert!(ImageSet::new(array![[0.0, 1.5]], 1, 2).is_err());
        assert!(ImageSet::new(array![[0.0, 0.5]], 2, 2).is_err());
        let set = ImageSet::new(array![[0.0, 0.5]], 1, 2).unwrap();
        assert!(set.clone().with_labels(vec![1, 2]).is_err());
        assert!(set.with_labels(vec![1]).is_ok());
    }

    #[test]
    fn concat_merges_domain_names() {
        let a = ImageSet::new(array![[0.1], [0.2]], 1, 1).unwrap().with_domain("a");
        let b = ImageSet::new(array![[0.3]], 1, 1).unwrap().with_domain("b");
        let c = ImageSet::concat(&[a.clone(), b, a]).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.domain_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(c.domains().unwrap(), &[0, 0, 1, 0, 0]);
        assert_eq!(c.domain_name(2), Some("b"));
        assert!(c.labels().is_none());
    }
}
