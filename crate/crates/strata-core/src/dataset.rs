//! Mixed-type tabular data with a binary outcome.
//!
//! Variables are reordered so continuous features come first, then
//! categorical features; the outcome is held separately. Categorical values
//! are stored as indices into the schema's level list, whose first entry is
//! the reference level. The second outcome level is the modeled event.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Feature,
    Outcome,
    ClusterLabel,
}

/// Declared type and role of one CSV column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub kind: VarKind,
    /// Level labels for categorical variables; the first is the reference.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default)]
    pub role: Role,
}

impl VariableSchema {
    pub fn continuous(name: &str) -> Self {
        VariableSchema {
            name: name.to_string(),
            kind: VarKind::Continuous,
            levels: Vec::new(),
            role: Role::Feature,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        VariableSchema {
            name: name.to_string(),
            kind: VarKind::Categorical,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            role: Role::Feature,
        }
    }

    pub fn outcome(name: &str, negative: &str, positive: &str) -> Self {
        VariableSchema {
            name: name.to_string(),
            kind: VarKind::Categorical,
            levels: vec![negative.to_string(), positive.to_string()],
            role: Role::Outcome,
        }
    }

    fn level_index(&self, value: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == value)
    }
}

/// Centering/scaling applied to each continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport<T> {
    pub names: Vec<String>,
    pub center: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> StandardizationReport<T> {
    /// Identity report (no-op transform) for `names`.
    pub fn identity(names: Vec<String>) -> Self {
        let n = names.len();
        StandardizationReport {
            names,
            center: vec![T::zero(); n],
            scale: vec![T::one(); n],
        }
    }
}

/// Validated dataset. Features are in canonical order: the `q` continuous
/// variables first, then the categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    features: Vec<VariableSchema>,
    outcome_schema: VariableSchema,
    continuous: Array2<T>,
    categorical: Vec<Vec<u32>>,
    outcome: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_label: Option<Vec<u32>>,
}

impl<T: Scalar> Dataset<T> {
    /// Assemble a dataset from columns already in canonical order.
    pub fn from_parts(
        features: Vec<VariableSchema>,
        outcome_schema: VariableSchema,
        continuous: Array2<T>,
        categorical: Vec<Vec<u32>>,
        outcome: Vec<u8>,
    ) -> Result<Self> {
        let ds = Dataset {
            features,
            outcome_schema,
            continuous,
            categorical,
            outcome,
            cluster_label: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.outcome.len();
        let q = self.continuous.ncols();
        if self.continuous.nrows() != n {
            return Err(Error::data("continuous block row count mismatch"));
        }
        for (c, col) in self.categorical.iter().enumerate() {
            if col.len() != n {
                return Err(Error::data(format!(
                    "categorical column {c} row count mismatch"
                )));
            }
        }
        if self.features.len() != q + self.categorical.len() {
            return Err(Error::data("schema/feature count mismatch"));
        }
        for (j, f) in self.features.iter().enumerate() {
            match f.kind {
                VarKind::Continuous if j >= q => {
                    return Err(Error::data("continuous feature after categorical block"))
                }
                VarKind::Categorical if j < q => {
                    return Err(Error::data("categorical feature in continuous block"))
                }
                VarKind::Categorical if f.levels.len() < 2 => {
                    return Err(Error::data(format!(
                        "categorical variable '{}' needs at least 2 levels",
                        f.name
                    )))
                }
                _ => {}
            }
        }
        if self.outcome_schema.levels.len() != 2 {
            return Err(Error::data("outcome must be binary (two levels)"));
        }
        let ones = self.outcome.iter().filter(|&&y| y == 1).count();
        if n > 0 && (ones == 0 || ones == n) {
            return Err(Error::data("outcome has one class"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Feature count (outcome excluded).
    pub fn p(&self) -> usize {
        self.features.len()
    }

    /// Number of continuous features.
    pub fn q(&self) -> usize {
        self.continuous.ncols()
    }

    pub fn features(&self) -> &[VariableSchema] {
        &self.features
    }

    pub fn outcome_schema(&self) -> &VariableSchema {
        &self.outcome_schema
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn cluster_label(&self) -> Option<&[u32]> {
        self.cluster_label.as_deref()
    }

    /// Values of continuous feature `j` (requires `j < q`).
    pub fn continuous_col(&self, j: usize) -> ArrayView1<'_, T> {
        self.continuous.column(j)
    }

    /// Level indices of categorical feature `j` (requires `q <= j < p`).
    pub fn categorical_col(&self, j: usize) -> &[u32] {
        &self.categorical[j - self.q()]
    }

    /// Level count of feature `j`: 1 for continuous, L for categorical.
    pub fn level_count(&self, j: usize) -> usize {
        match self.features[j].kind {
            VarKind::Continuous => 1,
            VarKind::Categorical => self.features[j].levels.len(),
        }
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// New dataset holding `rows` in order; indices may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        for &i in rows {
            if i >= self.n() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
        }
        let q = self.q();
        let mut cont = Array2::<T>::zeros((rows.len(), q));
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..q {
                cont[(r, j)] = self.continuous[(i, j)];
            }
        }
        let cat = self
            .categorical
            .iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect();
        let outcome = rows.iter().map(|&i| self.outcome[i]).collect();
        let ds = Dataset {
            features: self.features.clone(),
            outcome_schema: self.outcome_schema.clone(),
            continuous: cont,
            categorical: cat,
            outcome,
            cluster_label: self
                .cluster_label
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Replace each continuous feature by `(x - mean) / sd` with the sample
    /// standard deviation; reports the applied transform.
    pub fn standardize_continuous(&self) -> Result<(Self, StandardizationReport<T>)> {
        let n = self.n();
        let q = self.q();
        if n < 2 && q > 0 {
            return Err(Error::data("need at least 2 rows to standardize"));
        }
        let mut out = self.clone();
        let mut names = Vec::with_capacity(q);
        let mut center = Vec::with_capacity(q);
        let mut scale = Vec::with_capacity(q);
        let nt = T::from_usize(n).unwrap();
        for j in 0..q {
            let col = self.continuous.column(j);
            let mean = col.iter().cloned().sum::<T>() / nt;
            let ss = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
            let sd = (ss / (nt - T::one())).sqrt();
            if !(sd > T::zero()) {
                return Err(Error::data(format!(
                    "continuous variable '{}' has zero variance",
                    self.features[j].name
                )));
            }
            for i in 0..n {
                out.continuous[(i, j)] = (self.continuous[(i, j)] - mean) / sd;
            }
            names.push(self.features[j].name.clone());
            center.push(mean);
            scale.push(sd);
        }
        Ok((
            out,
            StandardizationReport {
                names,
                center,
                scale,
            },
        ))
    }

    /// Invert [`Dataset::standardize_continuous`].
    pub fn destandardize_continuous(&self, report: &StandardizationReport<T>) -> Self {
        let mut out = self.clone();
        for j in 0..self.q() {
            for i in 0..self.n() {
                out.continuous[(i, j)] = self.continuous[(i, j)] * report.scale[j] + report.center[j];
            }
        }
        out
    }

    /// Canonical JSON encoding, used for determinism checks.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Parse a schema sidecar. JSON when the extension is `.json`, TOML for
/// `.toml`; anything else tries JSON first.
pub fn load_schema(path: &Path) -> Result<Vec<VariableSchema>> {
    let text = std::fs::read_to_string(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    #[derive(Deserialize)]
    struct SchemaFile {
        variables: Vec<VariableSchema>,
    }
    let vars = match ext.as_str() {
        "toml" => toml::from_str::<SchemaFile>(&text)?.variables,
        "json" => serde_json::from_str::<Vec<VariableSchema>>(&text)
            .or_else(|_| serde_json::from_str::<SchemaFile>(&text).map(|f| f.variables))?,
        _ => serde_json::from_str::<Vec<VariableSchema>>(&text)
            .or_else(|_| serde_json::from_str::<SchemaFile>(&text).map(|f| f.variables))?,
    };
    validate_schema(&vars)?;
    Ok(vars)
}

/// Structural checks on a schema declaration.
pub fn validate_schema(vars: &[VariableSchema]) -> Result<()> {
    let mut names = std::collections::BTreeSet::new();
    for v in vars {
        if !names.insert(v.name.as_str()) {
            return Err(Error::data(format!("duplicate variable name '{}'", v.name)));
        }
        match v.kind {
            VarKind::Continuous if !v.levels.is_empty() => {
                return Err(Error::data(format!(
                    "continuous variable '{}' must not declare levels",
                    v.name
                )))
            }
            VarKind::Categorical => {
                if v.levels.len() < 2 {
                    return Err(Error::data(format!(
                        "categorical variable '{}' needs at least 2 levels",
                        v.name
                    )));
                }
                let mut seen = std::collections::BTreeSet::new();
                for l in &v.levels {
                    if !seen.insert(l.as_str()) {
                        return Err(Error::data(format!(
                            "variable '{}' has duplicate level '{}'",
                            v.name, l
                        )));
                    }
                }
            }
            _ => {}
        }
    }
    let outcomes: Vec<_> = vars.iter().filter(|v| v.role == Role::Outcome).collect();
    if outcomes.len() != 1 {
        return Err(Error::data(format!(
            "schema must declare exactly one outcome variable, found {}",
            outcomes.len()
        )));
    }
    let oc = outcomes[0];
    if oc.kind != VarKind::Categorical || oc.levels.len() != 2 {
        return Err(Error::data(
            "outcome must be categorical with exactly 2 levels (second level = modeled event)",
        ));
    }
    if vars.iter().filter(|v| v.role == Role::ClusterLabel).count() > 1 {
        return Err(Error::data("at most one cluster-label column allowed"));
    }
    if !vars.iter().any(|v| v.role == Role::Feature) {
        return Err(Error::data("schema declares no feature variables"));
    }
    Ok(())
}

/// Load a CSV file against `schema`. Rows are kept in file order; any
/// missing cell fails the load with the offending data rows listed.
pub fn load_csv<T: Scalar>(path: &Path, schema: &[VariableSchema]) -> Result<Dataset<T>> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("unknown column '{name}' (not in CSV header)")))
    };

    // Canonical feature order: continuous first, then categorical, file
    // order preserved within each block.
    let mut features: Vec<VariableSchema> = Vec::new();
    for v in schema {
        if v.role == Role::Feature && v.kind == VarKind::Continuous {
            features.push(v.clone());
        }
    }
    let q = features.len();
    for v in schema {
        if v.role == Role::Feature && v.kind == VarKind::Categorical {
            features.push(v.clone());
        }
    }
    let outcome_schema = schema
        .iter()
        .find(|v| v.role == Role::Outcome)
        .expect("validated")
        .clone();
    let cluster_schema = schema.iter().find(|v| v.role == Role::ClusterLabel);

    let feat_cols: Vec<usize> = features
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<_>>()?;
    let outcome_col = col_of(&outcome_schema.name)?;
    let cluster_col = cluster_schema.map(|c| col_of(&c.name)).transpose()?;

    let mut cont_rows: Vec<T> = Vec::new();
    let mut cat: Vec<Vec<u32>> = vec![Vec::new(); features.len() - q];
    let mut outcome: Vec<u8> = Vec::new();
    let mut cluster: Vec<u32> = Vec::new();
    let mut missing_rows: Vec<usize> = Vec::new();

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 1; // 1-based data row for messages

        // Parse into temporaries first; the row is appended only if complete.
        let mut row_cont: Vec<T> = Vec::with_capacity(q);
        let mut row_cat: Vec<u32> = Vec::with_capacity(cat.len());
        let mut row_missing = false;
        for (j, &ci) in feat_cols.iter().enumerate() {
            let raw = record.get(ci).unwrap_or("").trim();
            if raw.is_empty() {
                row_missing = true;
                continue;
            }
            match features[j].kind {
                VarKind::Continuous => {
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::data(format!(
                            "row {row_no}: cannot parse '{raw}' as number for '{}'",
                            features[j].name
                        ))
                    })?;
                    row_cont.push(T::c(v));
                }
                VarKind::Categorical => {
                    let idx = features[j].level_index(raw).ok_or_else(|| {
                        Error::data(format!(
                            "row {row_no}: unseen level '{raw}' for variable '{}'",
                            features[j].name
                        ))
                    })?;
                    row_cat.push(idx as u32);
                }
            }
        }
        let raw_y = record.get(outcome_col).unwrap_or("").trim();
        let row_y = if raw_y.is_empty() {
            row_missing = true;
            0
        } else {
            outcome_schema.level_index(raw_y).ok_or_else(|| {
                Error::data(format!(
                    "row {row_no}: unseen outcome level '{raw_y}' (expected one of {:?})",
                    outcome_schema.levels
                ))
            })? as u8
        };
        let mut row_cluster = 0u32;
        if let (Some(ci), Some(cs)) = (cluster_col, cluster_schema) {
            let raw = record.get(ci).unwrap_or("").trim();
            if raw.is_empty() {
                row_missing = true;
            } else {
                row_cluster = cs.level_index(raw).ok_or_else(|| {
                    Error::data(format!("row {row_no}: unseen cluster label '{raw}'"))
                })? as u32;
            }
        }

        if row_missing {
            missing_rows.push(row_no);
            continue;
        }
        cont_rows.extend(row_cont);
        for (slot, v) in cat.iter_mut().zip(row_cat) {
            slot.push(v);
        }
        outcome.push(row_y);
        if cluster_col.is_some() {
            cluster.push(row_cluster);
        }
    }

    if !missing_rows.is_empty() {
        let shown: Vec<String> = missing_rows.iter().take(20).map(|r| r.to_string()).collect();
        let suffix = if missing_rows.len() > 20 { ", ..." } else { "" };
        return Err(Error::data(format!(
            "{} row(s) with missing cells rejected (rows {}{})",
            missing_rows.len(),
            shown.join(", "),
            suffix
        )));
    }

    let n = outcome.len();
    if n == 0 {
        return Err(Error::data("no data rows"));
    }
    let continuous = Array2::from_shape_vec((n, q), cont_rows)
        .map_err(|e| Error::data(format!("internal shape error: {e}")))?;
    let mut ds = Dataset::from_parts(features, outcome_schema, continuous, cat, outcome)?;
    if cluster_col.is_some() {
        ds.cluster_label = Some(cluster);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy_schema() -> Vec<VariableSchema> {
        vec![
            VariableSchema::continuous("x1"),
            VariableSchema::categorical("x2", &["a", "b"]),
            VariableSchema::outcome("y", "0", "1"),
        ]
    }

    #[test]
    fn load_small_file() {
        let f = write_csv("x1,x2,y\n1.5,a,0\n2.0,b,1\n3.5,a,1\n0.5,b,0\n");
        let ds: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.q(), 1);
        assert_eq!(ds.outcome(), &[0, 1, 1, 0]);
        assert_eq!(ds.categorical_col(1), &[0, 1, 0, 1]);
    }

    #[test]
    fn missing_cell_names_row() {
        let f = write_csv("x1,x2,y\n1.5,a,0\n,b,1\n3.5,a,1\n");
        let err = load_csv::<f64>(f.path(), &toy_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing"), "{msg}");
        assert!(msg.contains('2'), "{msg}");
    }

    #[test]
    fn single_class_outcome_rejected() {
        let f = write_csv("x1,x2,y\n1.5,a,1\n2.0,b,1\n");
        let err = load_csv::<f64>(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("one class"), "{err}");
    }

    #[test]
    fn unknown_column_rejected() {
        let f = write_csv("x1,zzz,y\n1.5,a,0\n2.0,b,1\n");
        let err = load_csv::<f64>(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("unknown column"), "{err}");
    }

    #[test]
    fn unseen_level_rejected() {
        let f = write_csv("x1,x2,y\n1.5,a,0\n2.0,c,1\n");
        let err = load_csv::<f64>(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("unseen level 'c'"), "{err}");
    }

    #[test]
    fn standardize_symmetric_column() {
        let f = write_csv("x1,x2,y\n1,a,0\n2,b,1\n3,a,1\n");
        let ds: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        let (std_ds, rep) = ds.standardize_continuous().unwrap();
        assert!((rep.center[0] - 2.0).abs() < 1e-15);
        assert!((rep.scale[0] - 1.0).abs() < 1e-15);
        let col = std_ds.continuous_col(0);
        assert!((col[0] + 1.0).abs() < 1e-15);
        assert!(col[1].abs() < 1e-15);
        assert!((col[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_is_idempotent_and_invertible() {
        let f = write_csv("x1,x2,y\n-1,a,0\n0,b,1\n1,a,1\n");
        let ds: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        let (s1, rep1) = ds.standardize_continuous().unwrap();
        let (s2, rep2) = s1.standardize_continuous().unwrap();
        assert!(rep2.center[0].abs() < 1e-12);
        assert!((rep2.scale[0] - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((s1.continuous_col(0)[i] - s2.continuous_col(0)[i]).abs() < 1e-12);
        }
        let back = s1.destandardize_continuous(&rep1);
        for i in 0..3 {
            assert!((back.continuous_col(0)[i] - ds.continuous_col(0)[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_column_fails_standardization() {
        let f = write_csv("x1,x2,y\n5,a,0\n5,b,1\n5,a,1\n");
        let ds: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        assert!(ds.standardize_continuous().is_err());
    }

    #[test]
    fn load_is_deterministic_in_canonical_json() {
        let f = write_csv("x1,x2,y\n1.5,a,0\n2.25,b,1\n3.125,a,1\n");
        let a: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        let b: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
    }

    #[test]
    fn schema_sidecar_round_trip() {
        let json = r#"[
            {"name":"x1","kind":"continuous","role":"feature"},
            {"name":"x2","kind":"categorical","levels":["a","b"],"role":"feature"},
            {"name":"y","kind":"categorical","levels":["0","1"],"role":"outcome"}
        ]"#;
        let mut jf = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
        jf.write_all(json.as_bytes()).unwrap();
        let vars = load_schema(jf.path()).unwrap();
        assert_eq!(vars, toy_schema());

        let toml_text = r#"
            [[variables]]
            name = "x1"
            kind = "continuous"

            [[variables]]
            name = "x2"
            kind = "categorical"
            levels = ["a", "b"]

            [[variables]]
            name = "y"
            kind = "categorical"
            levels = ["0", "1"]
            role = "outcome"
        "#;
        let mut tf = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        tf.write_all(toml_text.as_bytes()).unwrap();
        let vars = load_schema(tf.path()).unwrap();
        assert_eq!(vars, toy_schema());
    }

    #[test]
    fn canonical_order_puts_continuous_first() {
        let schema = vec![
            VariableSchema::categorical("c1", &["u", "v"]),
            VariableSchema::continuous("x1"),
            VariableSchema::outcome("y", "0", "1"),
            VariableSchema::continuous("x2"),
        ];
        let f = write_csv("c1,x1,y,x2\nu,1,0,9\nv,2,1,8\nu,3,1,7\n");
        let ds: Dataset<f64> = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.q(), 2);
        let names: Vec<_> = ds.features().iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["x1", "x2", "c1"]);
    }

    #[test]
    fn select_rows_allows_repeats() {
        let f = write_csv("x1,x2,y\n1,a,0\n2,b,1\n3,a,1\n");
        let ds: Dataset<f64> = load_csv(f.path(), &toy_schema()).unwrap();
        let sub = ds.select_rows(&[2, 0, 2]).unwrap();
        assert_eq!(sub.n(), 3);
        assert_eq!(sub.outcome(), &[1, 0, 1]);
        assert!((sub.continuous_col(0)[0] - 3.0).abs() < 1e-15);
        assert!((sub.continuous_col(0)[2] - 3.0).abs() < 1e-15);
    }
}
