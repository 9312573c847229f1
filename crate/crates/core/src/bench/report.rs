//! Audit of stored matrices and aggregation of result CSVs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graphgen::InteractionMatrix;
use crate::linalg;
use crate::noise::CovarianceSpec;
use crate::theory::{self, ConsistencyReport};

/// Consistency report for an interaction matrix and a noise covariance
/// stored in the matrix text format.
pub fn audit(a_path: &Path, sigma_path: &Path) -> Result<ConsistencyReport> {
    let a = InteractionMatrix::from_matrix(linalg::read_matrix(a_path)?)?;
    let sigma = CovarianceSpec::from_matrix(linalg::read_matrix(sigma_path)?)?;
    theory::check_theorem2(&a, &sigma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub regime: String,
    pub method: String,
    pub beta: String,
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single trial).
    pub sd: f64,
    pub median: f64,
    pub errors: usize,
}

pub const PLOT_HEADER: &str = "regime,method,beta,n,trials,mean,sd,median,errors";

impl PlotRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.regime, self.method, self.beta, self.n, self.count, self.mean, self.sd, self.median, self.errors
        )
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mean, spread and median of accuracy per (regime, method, beta, n),
/// in order of first appearance of each group.
pub fn plotdata(csv: &str) -> Result<Vec<PlotRow>> {
    let mut lines = csv.lines();
    let header: Vec<&str> =
        lines.next().ok_or_else(|| Error::Format("empty results file".into()))?.split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Format(format!("results file lacks column {name}")))
    };
    let (c_method, c_regime, c_beta, c_n, c_acc) =
        (col("method")?, col("regime")?, col("beta")?, col("n")?, col("accuracy")?);

    type Key = (String, String, String, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, (Vec<f64>, usize)> = BTreeMap::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < header.len() {
            return Err(Error::Format(format!("line {} has too few fields", k + 2)));
        }
        let n: usize = f[c_n].parse().map_err(|_| Error::Format(format!("bad n on line {}", k + 2)))?;
        let key = (f[c_regime].to_string(), f[c_method].to_string(), f[c_beta].to_string(), n);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), 0)
        });
        match f[c_acc] {
            "" => entry.1 += 1,
            v => entry.0.push(v.parse().map_err(|_| Error::Format(format!("bad accuracy on line {}", k + 2)))?),
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let (mut acc, errors) = groups.remove(&key).unwrap();
            let count = acc.len();
            let mean = acc.iter().sum::<f64>() / count as f64;
            let sd = if count > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            let med = median(&mut acc);
            PlotRow { regime: key.0, method: key.1, beta: key.2, n: key.3, count, mean, sd, median: med, errors }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_groups() {
        let csv = "method,regime,beta,n,trial,seed,accuracy,error\n\
                   nig,r,0,10,0,1,0.5,\n\
                   nig,r,0,10,1,2,1,\n\
                   nig,r,0,10,2,3,,conditioning: x\n\
                   granger,r,0,10,0,1,0.25,\n";
        let rows = plotdata(csv).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "nig");
        assert_eq!(rows[0].count, 2);
        assert_eq!(rows[0].errors, 1);
        assert_eq!(rows[0].mean, 0.75);
        assert!((rows[0].sd - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].sd, 0.0);
        assert!(plotdata("a,b\n").is_err());
    }

    #[test]
    fn audit_reads_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let s = dir.path().join("s.txt");
        std::fs::write(&a, "2 2\n0.2 0.4\n0.4 0.2\n").unwrap();
        std::fs::write(&s, "2 2\n1 0\n0 1\n").unwrap();
        let r = audit(&a, &s).unwrap();
        assert!(r.certified());
        assert_eq!(r.min_intervention, 0.0);
    }
}
