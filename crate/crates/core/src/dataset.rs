//! Survey ingestion and balanced sampling.
//!
//! Raw files follow the layout of the public Swissmetro stated-preference
//! release: one response per row, a header line, and numeric cells. Only the
//! columns named in a [`ColumnMap`] are interpreted; everything else is kept
//! verbatim and ignored downstream.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mode::{ModeLabel, PerMode};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed survey file: {0}")]
    Csv(#[from] csv::Error),
    #[error("required column `{0}` is missing")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` has unparseable value `{value}`")]
    UnparseableValue { row: usize, column: String, value: String },
    #[error("survey file has no data rows")]
    EmptyFile,
    #[error("invalid column map: {0}")]
    InvalidColumnMap(String),
    #[error("no rows survived filtering")]
    NoValidRows,
    #[error("{mode} needs {needed} members for a balanced split but only {available} are available")]
    InsufficientClassMembers {
        mode: ModeLabel,
        needed: usize,
        available: usize,
    },
    #[error("invalid situation {id}: {reason}")]
    InvalidSituation { id: String, reason: String },
}

/// A binary attribute stored in a numeric column; `true_value` marks `true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagColumn {
    pub column: String,
    pub true_value: f64,
}

impl FlagColumn {
    pub fn new(column: &str, true_value: f64) -> Self {
        FlagColumn { column: column.to_string(), true_value }
    }
}

/// Binds the eight modelling features, the label and the availability flags
/// to raw column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub train_time: String,
    pub train_cost: String,
    pub car_time: String,
    pub car_cost: String,
    pub swissmetro_time: String,
    pub swissmetro_cost: String,
    pub regular_train_user: FlagColumn,
    pub annual_pass: FlagColumn,
    pub choice: String,
    pub train_available: String,
    pub car_available: String,
    pub swissmetro_available: String,
    /// Respondent identifier, used only to build readable situation ids.
    pub individual_id: Option<String>,
    #[serde(with = "code_map")]
    pub choice_codes: BTreeMap<i64, ModeLabel>,
    /// In the public file the train and Swissmetro cost cells of annual-pass
    /// holders hold the pass price rather than a trip fare. When set, those
    /// costs are ingested as zero out-of-pocket cost.
    pub zero_costs_for_pass_holders: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            train_time: "TRAIN_TT".into(),
            train_cost: "TRAIN_CO".into(),
            car_time: "CAR_TT".into(),
            car_cost: "CAR_CO".into(),
            swissmetro_time: "SM_TT".into(),
            swissmetro_cost: "SM_CO".into(),
            // SURVEY = 0 marks respondents recruited on trains.
            regular_train_user: FlagColumn::new("SURVEY", 0.0),
            annual_pass: FlagColumn::new("GA", 1.0),
            choice: "CHOICE".into(),
            train_available: "TRAIN_AV".into(),
            car_available: "CAR_AV".into(),
            swissmetro_available: "SM_AV".into(),
            individual_id: Some("ID".into()),
            choice_codes: BTreeMap::from([
                (1, ModeLabel::Train),
                (2, ModeLabel::Swissmetro),
                (3, ModeLabel::Car),
            ]),
            zero_costs_for_pass_holders: true,
        }
    }
}

impl ColumnMap {
    /// Every column the map reads, in a fixed order.
    pub fn required_columns(&self) -> Vec<&str> {
        let mut cols = vec![
            self.train_time.as_str(),
            self.train_cost.as_str(),
            self.car_time.as_str(),
            self.car_cost.as_str(),
            self.swissmetro_time.as_str(),
            self.swissmetro_cost.as_str(),
            self.regular_train_user.column.as_str(),
            self.annual_pass.column.as_str(),
            self.choice.as_str(),
            self.train_available.as_str(),
            self.car_available.as_str(),
            self.swissmetro_available.as_str(),
        ];
        if let Some(id) = &self.individual_id {
            cols.push(id.as_str());
        }
        cols
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let cols = self.required_columns();
        let mut seen = HashSet::new();
        for c in &cols {
            if c.is_empty() {
                return Err(DatasetError::InvalidColumnMap("empty column name".into()));
            }
            if !seen.insert(*c) {
                return Err(DatasetError::InvalidColumnMap(format!("column `{c}` mapped twice")));
            }
        }
        let modes: BTreeSet<ModeLabel> = self.choice_codes.values().copied().collect();
        if self.choice_codes.len() != 3 || modes.len() != 3 {
            return Err(DatasetError::InvalidColumnMap(
                "choice_codes must map exactly one code to each of Train, Car, Swissmetro".into(),
            ));
        }
        Ok(())
    }

    fn time_column(&self, mode: ModeLabel) -> &str {
        match mode {
            ModeLabel::Train => &self.train_time,
            ModeLabel::Car => &self.car_time,
            ModeLabel::Swissmetro => &self.swissmetro_time,
        }
    }

    fn cost_column(&self, mode: ModeLabel) -> &str {
        match mode {
            ModeLabel::Train => &self.train_cost,
            ModeLabel::Car => &self.car_cost,
            ModeLabel::Swissmetro => &self.swissmetro_cost,
        }
    }

    fn availability_column(&self, mode: ModeLabel) -> &str {
        match mode {
            ModeLabel::Train => &self.train_available,
            ModeLabel::Car => &self.car_available,
            ModeLabel::Swissmetro => &self.swissmetro_available,
        }
    }
}

// TOML tables only allow string keys.
mod code_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::mode::ModeLabel;

    pub fn serialize<S: Serializer>(map: &BTreeMap<i64, ModeLabel>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<String, ModeLabel>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, ModeLabel>, D::Error> {
        BTreeMap::<String, ModeLabel>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<i64>()
                    .map(|k| (k, v))
                    .map_err(|_| D::Error::custom(format!("choice code `{k}` is not an integer")))
            })
            .collect()
    }
}

/// One data row. Mapped columns are parsed, the rest are kept as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based data row number (the header is not counted).
    pub row: usize,
    pub cells: Vec<String>,
    pub mapped: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSurveyTable {
    pub source_path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<RawRow>,
}

impl RawSurveyTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Reads a delimiter-separated survey file with a header row.
pub fn load_raw(path: &Path, map: &ColumnMap, delimiter: u8) -> Result<RawSurveyTable, DatasetError> {
    map.validate()?;
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if columns.iter().all(String::is_empty) {
        return Err(DatasetError::EmptyFile);
    }
    let mut positions = Vec::new();
    for name in map.required_columns() {
        let idx = columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))?;
        positions.push((name.to_string(), idx));
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let mut mapped = BTreeMap::new();
        for (name, idx) in &positions {
            let cell = record.get(*idx).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| DatasetError::UnparseableValue {
                row,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            mapped.insert(name.clone(), value);
        }
        rows.push(RawRow {
            row,
            cells: record.iter().map(str::to_string).collect(),
            mapped,
        });
    }
    if rows.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Ok(RawSurveyTable {
        source_path: path.to_path_buf(),
        columns,
        rows,
    })
}

/// One survey response with the eight features and the observed choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceSituation {
    pub situation_id: String,
    pub travel_time_min: PerMode<u32>,
    pub travel_cost: PerMode<u32>,
    pub is_regular_train_user: bool,
    pub owns_annual_pass: bool,
    pub chosen: ModeLabel,
}

impl ChoiceSituation {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if let Some((mode, _)) = self.travel_time_min.iter().find(|(_, t)| **t == 0) {
            return Err(DatasetError::InvalidSituation {
                id: self.situation_id.clone(),
                reason: format!("{mode} travel time must be positive"),
            });
        }
        Ok(())
    }
}

/// Counts of rows dropped by [`to_choice_situations`], by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionSummary {
    pub input_rows: usize,
    pub kept: usize,
    pub no_choice: usize,
    pub unknown_choice_code: usize,
    pub unavailable_alternative: usize,
    pub invalid_attribute: usize,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

enum Verdict {
    Keep(ChoiceSituation),
    NoChoice,
    UnknownCode,
    Unavailable,
    Invalid,
}

fn convert_row(row: &RawRow, map: &ColumnMap) -> Verdict {
    let get = |c: &str| row.mapped.get(c).copied().unwrap_or(f64::NAN);

    let code = get(&map.choice);
    if code == 0.0 {
        return Verdict::NoChoice;
    }
    let chosen = if code.fract() == 0.0 {
        map.choice_codes.get(&(code as i64)).copied()
    } else {
        None
    };
    let Some(chosen) = chosen else {
        return Verdict::UnknownCode;
    };
    if ModeLabel::ALL.iter().any(|m| get(map.availability_column(*m)) != 1.0) {
        return Verdict::Unavailable;
    }

    let owns_annual_pass = get(&map.annual_pass.column) == map.annual_pass.true_value;
    let is_regular_train_user =
        get(&map.regular_train_user.column) == map.regular_train_user.true_value;

    let mut times = PerMode::default();
    let mut costs = PerMode::default();
    for mode in ModeLabel::ALL {
        let t = round_half_up(get(map.time_column(mode)));
        let mut c = round_half_up(get(map.cost_column(mode)));
        if !t.is_finite() || !c.is_finite() || t <= 0.0 || c < 0.0 || t > u32::MAX as f64 || c > u32::MAX as f64 {
            return Verdict::Invalid;
        }
        if owns_annual_pass && map.zero_costs_for_pass_holders && mode != ModeLabel::Car {
            c = 0.0;
        }
        times[mode] = t as u32;
        costs[mode] = c as u32;
    }

    let situation_id = match &map.individual_id {
        Some(col) => format!("{}-{}", get(col), row.row),
        None => format!("row-{}", row.row),
    };
    Verdict::Keep(ChoiceSituation {
        situation_id,
        travel_time_min: times,
        travel_cost: costs,
        is_regular_train_user,
        owns_annual_pass,
        chosen,
    })
}

/// Converts raw rows to validated situations, dropping rows with no or an
/// unknown choice, any unavailable alternative, or out-of-range attributes.
pub fn to_choice_situations(
    table: &RawSurveyTable,
    map: &ColumnMap,
) -> Result<(Vec<ChoiceSituation>, ExclusionSummary), DatasetError> {
    map.validate()?;
    let mut summary = ExclusionSummary {
        input_rows: table.rows.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for row in &table.rows {
        match convert_row(row, map) {
            Verdict::Keep(s) => out.push(s),
            Verdict::NoChoice => summary.no_choice += 1,
            Verdict::UnknownCode => summary.unknown_choice_code += 1,
            Verdict::Unavailable => summary.unavailable_alternative += 1,
            Verdict::Invalid => summary.invalid_attribute += 1,
        }
    }
    summary.kept = out.len();
    tracing::info!(
        source = %table.source_path.display(),
        input_rows = summary.input_rows,
        kept = summary.kept,
        no_choice = summary.no_choice,
        unknown_choice_code = summary.unknown_choice_code,
        unavailable_alternative = summary.unavailable_alternative,
        invalid_attribute = summary.invalid_attribute,
        "survey exclusion summary"
    );
    if out.is_empty() {
        return Err(DatasetError::NoValidRows);
    }
    Ok((out, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<ChoiceSituation>,
    pub test: Vec<ChoiceSituation>,
}

/// Splits `total` into three per-class counts differing by at most one.
/// The remainder goes to the classes starting at `offset` (cyclically).
fn class_quota(total: usize, offset: usize) -> [usize; 3] {
    let mut q = [total / 3; 3];
    for k in 0..total % 3 {
        q[(offset + k) % 3] += 1;
    }
    q
}

/// Draws a class-balanced train and test sample without replacement.
///
/// Each class is shuffled with a generator seeded by `seed`; the train
/// quota is taken first and the test quota from the remainder. Remainders
/// are spread so that combined per-class totals also differ by at most one.
pub fn balanced_split(
    situations: &[ChoiceSituation],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Split, DatasetError> {
    let train_quota = class_quota(n_train, 0);
    let test_quota = class_quota(n_test, n_train % 3);

    let mut by_class: [Vec<&ChoiceSituation>; 3] = Default::default();
    for s in situations {
        by_class[s.chosen.index()].push(s);
    }
    for mode in ModeLabel::ALL {
        let needed = train_quota[mode.index()] + test_quota[mode.index()];
        let available = by_class[mode.index()].len();
        if available < needed {
            return Err(DatasetError::InsufficientClassMembers { mode, needed, available });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for mode in ModeLabel::ALL {
        let members = &mut by_class[mode.index()];
        members.shuffle(&mut rng);
        let (nt, ns) = (train_quota[mode.index()], test_quota[mode.index()]);
        train.extend(members[..nt].iter().map(|s| (*s).clone()));
        test.extend(members[nt..nt + ns].iter().map(|s| (*s).clone()));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(Split { train, test })
}

/// Per-class counts of a list of situations, indexed by [`ModeLabel::index`].
pub fn class_counts(situations: &[ChoiceSituation]) -> [usize; 3] {
    let mut c = [0; 3];
    for s in situations {
        c[s.chosen.index()] += 1;
    }
    c
}
