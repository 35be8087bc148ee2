//! Grouped regression data.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// One cluster: outcome vector and regressor matrix with matching row count.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub id: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.y.len()
    }
}

/// A clustered dataset: an ordered list of clusters sharing a regressor
/// dimension p, with G >= 2 and total sample size N > p.
#[derive(Debug, Clone)]
pub struct ClusterDataset {
    clusters: Vec<Cluster>,
    p: usize,
}

impl ClusterDataset {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 clusters, got {}",
                clusters.len()
            )));
        }
        let p = clusters[0].x.ncols();
        if p == 0 {
            return Err(Error::InvalidArgument("zero regressors".into()));
        }
        let mut n = 0usize;
        for c in &clusters {
            if c.size() == 0 {
                return Err(Error::InsufficientData(format!("cluster '{}' is empty", c.id)));
            }
            if c.x.nrows() != c.size() {
                return Err(Error::InvalidArgument(format!(
                    "cluster '{}': X has {} rows but y has {}",
                    c.id,
                    c.x.nrows(),
                    c.size()
                )));
            }
            if c.x.ncols() != p {
                return Err(Error::InvalidArgument(format!(
                    "cluster '{}': X has {} columns, expected {}",
                    c.id,
                    c.x.ncols(),
                    p
                )));
            }
            n += c.size();
        }
        if n <= p {
            return Err(Error::InsufficientData(format!(
                "total sample size {n} must exceed the {p} regressors"
            )));
        }
        Ok(Self { clusters, p })
    }

    /// Number of clusters G.
    pub fn g(&self) -> usize {
        self.clusters.len()
    }

    /// Regressor dimension p.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Total sample size N.
    pub fn n(&self) -> usize {
        self.clusters.iter().map(Cluster::size).sum()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Cluster sizes in order.
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::size).collect()
    }
}
