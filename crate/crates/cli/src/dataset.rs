//! Delimited-text ingestion through a column mapping.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rmwaft_core::data::SurvivalDataset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One covariate of the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateColumn {
    /// Name in the design and in reports.
    pub name: String,
    /// Source column in the file.
    pub column: String,
    /// When set, the covariate is 1 where the cell equals this value and 0
    /// elsewhere; otherwise the cell is parsed as a number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator: Option<String>,
}

/// Maps file columns to time, status, covariates and an optional group id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub status: String,
    #[serde(default)]
    pub covariates: Vec<CovariateColumn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl Schema {
    /// The bone-marrow layout: `type` 2 (autologous) is the treatment indicator.
    pub fn bone_marrow() -> Self {
        Self {
            time: "time".into(),
            status: "delta".into(),
            covariates: vec![CovariateColumn {
                name: "auto".into(),
                column: "type".into(),
                indicator: Some("2".into()),
            }],
            group: None,
            delimiter: ',',
        }
    }

    /// The kidney layout: age, a female indicator (`sex` 2), one cluster per patient.
    pub fn kidney() -> Self {
        Self {
            time: "time".into(),
            status: "status".into(),
            covariates: vec![
                CovariateColumn {
                    name: "age".into(),
                    column: "age".into(),
                    indicator: None,
                },
                CovariateColumn {
                    name: "female".into(),
                    column: "sex".into(),
                    indicator: Some("2".into()),
                },
            ],
            group: Some("id".into()),
            delimiter: ',',
        }
    }
}

/// A validated dataset plus the checksum of the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: SurvivalDataset,
    pub sha256: String,
    /// Group labels as read, one per row.
    pub groups: Option<Vec<u64>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Reads `path` with `schema`; an intercept column is prepended.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<LoadedDataset> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (data, groups) =
        parse(&bytes, schema).with_context(|| format!("loading {}", path.display()))?;
    Ok(LoadedDataset {
        data,
        sha256: sha256_hex(&bytes),
        groups,
    })
}

fn parse(bytes: &[u8], schema: &Schema) -> Result<(SurvivalDataset, Option<Vec<u64>>)> {
    let delimiter =
        u8::try_from(schema.delimiter).map_err(|_| anyhow!("delimiter must be ASCII"))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    let index = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            anyhow!(
                "no column `{name}` in header {:?}",
                header.iter().collect::<Vec<_>>()
            )
        })
    };
    let t_col = index(&schema.time)?;
    let s_col = index(&schema.status)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| index(&c.column))
        .collect::<Result<Vec<_>>>()?;
    let g_col = schema.group.as_deref().map(index).transpose()?;

    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |j: usize| {
            record
                .get(j)
                .ok_or_else(|| anyhow!("row {i}: missing field {j}"))
        };
        let t: f64 = cell(t_col)?
            .parse()
            .with_context(|| format!("row {i}: time"))?;
        let s: u8 = cell(s_col)?
            .parse()
            .with_context(|| format!("row {i}: status"))?;
        let mut x = Vec::with_capacity(x_cols.len());
        for (c, &j) in schema.covariates.iter().zip(&x_cols) {
            let v = cell(j)?;
            x.push(match &c.indicator {
                Some(level) => f64::from(u8::from(v == level)),
                None => v
                    .parse()
                    .with_context(|| format!("row {i}: covariate {}", c.name))?,
            });
        }
        if let Some(j) = g_col {
            groups.push(
                cell(j)?
                    .parse::<u64>()
                    .with_context(|| format!("row {i}: group"))?,
            );
        }
        times.push(t);
        status.push(s);
        rows.push(x);
    }
    if times.is_empty() {
        bail!("no data rows");
    }
    let names: Vec<&str> = schema.covariates.iter().map(|c| c.name.as_str()).collect();
    let groups = g_col.map(|_| groups);
    let data = SurvivalDataset::with_intercept(times, status, &rows, &names, groups.clone())?;
    Ok((data, groups))
}

/// Writes `time,status[,group],covariates...` with round-trip number formatting.
pub fn write_dataset(path: &Path, data: &SurvivalDataset, groups: Option<&[u64]>) -> Result<()> {
    let mut out = csv::Writer::from_writer(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    let x = data.covariates();
    let names = &data.covariate_names()[1..];
    let mut header = vec!["time".to_string(), "status".to_string()];
    if groups.is_some() {
        header.push("group".into());
    }
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![
            data.times()[i].to_string(),
            u8::from(data.status()[i]).to_string(),
        ];
        if let Some(g) = groups {
            rec.push(g[i].to_string());
        }
        rec.extend((1..x.ncols()).map(|j| x[(i, j)].to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Schema matching the layout of [`write_dataset`].
pub fn written_schema(data: &SurvivalDataset, grouped: bool) -> Schema {
    Schema {
        time: "time".into(),
        status: "status".into(),
        covariates: data.covariate_names()[1..]
            .iter()
            .map(|n| CovariateColumn {
                name: n.clone(),
                column: n.clone(),
                indicator: None,
            })
            .collect(),
        group: grouped.then(|| "group".into()),
        delimiter: ',',
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
