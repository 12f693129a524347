//! Experiment data representations: participant records, datasets,
//! checkpoint snapshots, and the paired-difference construction.

use std::collections::BTreeSet;
use std::io;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Gaussian,
    Tte,
}

/// Observed outcome. For time-to-event records the competing dropout is
/// already resolved at generation time: `time` is min(event, dropout) and
/// `event` says whether the event (rather than dropout) was observed.
/// Snapshotting therefore needs no random state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Gaussian { y: f64 },
    Tte { time: f64, event: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticipantRecord {
    pub id: u64,
    /// Recruitment step (Gaussian) or accrual month (time-to-event).
    pub arrival: f64,
    pub treatment: bool,
    pub covariates: Vec<f64>,
    pub outcome: Outcome,
    /// Synthetic-data annotation; read only by oracle baselines.
    pub true_group: Option<i64>,
    /// Synthetic-data annotation; read only by oracle baselines.
    pub true_cate: Option<f64>,
}

impl ParticipantRecord {
    pub fn d(&self) -> f64 {
        if self.treatment {
            1.0
        } else {
            0.0
        }
    }

    /// Gaussian outcome value; panics on a time-to-event record.
    pub fn y(&self) -> f64 {
        match self.outcome {
            Outcome::Gaussian { y } => y,
            Outcome::Tte { .. } => panic!("gaussian outcome requested from tte record"),
        }
    }

    pub fn tte(&self) -> (f64, bool) {
        match self.outcome {
            Outcome::Tte { time, event } => (time, event),
            Outcome::Gaussian { .. } => panic!("tte outcome requested from gaussian record"),
        }
    }
}

/// How participants arrive; drives snapshot and pairing semantics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RecruitmentModel {
    /// One treated and one control participant per arrival step.
    PairedSteps,
    /// Continuous accrual over a window, checkpoints at calendar months.
    Accrual {
        accrual_months: f64,
        study_months: Option<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct ExperimentDataset {
    records: Vec<ParticipantRecord>,
    outcome_kind: OutcomeKind,
    recruitment: RecruitmentModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Checkpoint {
    /// First n participants by arrival (Gaussian protocols).
    Count(usize),
    /// Calendar month with administrative censoring (time-to-event).
    Month(f64),
}

/// The data observable at one checkpoint. Records are owned copies; for
/// time-to-event datasets the durations are already administratively
/// censored at the checkpoint.
#[derive(Clone, Debug)]
pub struct CheckpointView {
    pub checkpoint: Checkpoint,
    pub outcome_kind: OutcomeKind,
    pub recruitment: RecruitmentModel,
    pub records: Vec<ParticipantRecord>,
}

/// Per-step treated-minus-control outcome differences.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDifferences {
    /// z_t = y(treated) - y(control) for each complete step, in step order.
    pub diffs: Vec<f64>,
    /// (treated id, control id) behind each difference.
    pub pair_ids: Vec<(u64, u64)>,
    /// Records that could not be paired within their step.
    pub dropped: usize,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("io failure: {0}")]
    Io(#[from] io::Error),
    #[error("malformed row at line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("treatment must be 0 or 1 at line {0}")]
    TreatmentNotBinary(u64),
    #[error("event indicator must be 0 or 1 at line {0}")]
    EventNotBinary(u64),
    #[error("event time must be positive at line {0}")]
    NonPositiveTime(u64),
    #[error("inconsistent covariate arity at line {line}: expected {expected}, got {got}")]
    CovariateArity { line: u64, expected: usize, got: usize },
    #[error("column {0} mixes outcome kinds with the requested schema")]
    MixedOutcome(String),
    #[error("missing required column {0}")]
    MissingColumn(&'static str),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("checkpoint outside dataset horizon")]
    CheckpointBeyondHorizon,
    #[error("checkpoint kind does not match the dataset outcome kind")]
    CheckpointKindMismatch,
    #[error("operation requires {0:?} outcomes")]
    WrongOutcomeKind(OutcomeKind),
    #[error("no complete treated/control pairs")]
    NoCompletePairs,
}

impl ExperimentDataset {
    /// Validates and stores records, sorting them by arrival (stable).
    pub fn new(
        mut records: Vec<ParticipantRecord>,
        outcome_kind: OutcomeKind,
        recruitment: RecruitmentModel,
    ) -> Result<Self, DataError> {
        let mut ids = BTreeSet::new();
        let mut arity = None;
        for r in &records {
            if !ids.insert(r.id) {
                return Err(DataError::Invalid(format!("duplicate participant id {}", r.id)));
            }
            match arity {
                None => arity = Some(r.covariates.len()),
                Some(a) if a != r.covariates.len() => {
                    return Err(DataError::Invalid(format!(
                        "covariate arity differs across records: {} vs {}",
                        a,
                        r.covariates.len()
                    )))
                }
                _ => {}
            }
            match (outcome_kind, &r.outcome) {
                (OutcomeKind::Gaussian, Outcome::Gaussian { .. }) => {}
                (OutcomeKind::Tte, Outcome::Tte { time, .. }) => {
                    if !(*time > 0.0) {
                        return Err(DataError::Invalid(format!(
                            "event time must be positive (id {})",
                            r.id
                        )));
                    }
                }
                _ => {
                    return Err(DataError::Invalid(format!(
                        "record id {} has the wrong outcome kind",
                        r.id
                    )))
                }
            }
        }
        records.sort_by(|a, b| a.arrival.partial_cmp(&b.arrival).unwrap());
        Ok(Self { records, outcome_kind, recruitment })
    }

    pub fn records(&self) -> &[ParticipantRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn recruitment(&self) -> RecruitmentModel {
        self.recruitment
    }

    /// Data observable at the checkpoint. Gaussian checkpoints take the
    /// first n records by arrival; month checkpoints administratively
    /// censor every accrued participant at (month - accrual).
    pub fn snapshot_at(&self, checkpoint: Checkpoint) -> Result<CheckpointView, DataError> {
        let records = match (self.outcome_kind, checkpoint) {
            (OutcomeKind::Gaussian, Checkpoint::Count(n)) => {
                if n > self.records.len() {
                    return Err(DataError::CheckpointBeyondHorizon);
                }
                self.records[..n].to_vec()
            }
            (OutcomeKind::Tte, Checkpoint::Month(month)) => {
                if !(month >= 0.0) {
                    return Err(DataError::CheckpointBeyondHorizon);
                }
                if let RecruitmentModel::Accrual { study_months: Some(h), .. } = self.recruitment {
                    if month > h {
                        return Err(DataError::CheckpointBeyondHorizon);
                    }
                }
                self.records
                    .iter()
                    .filter(|r| r.arrival <= month)
                    .map(|r| {
                        let (time, event) = r.tte();
                        let follow_up = month - r.arrival;
                        let mut out = r.clone();
                        out.outcome = if time <= follow_up {
                            Outcome::Tte { time, event }
                        } else {
                            Outcome::Tte { time: follow_up, event: false }
                        };
                        out
                    })
                    .collect()
            }
            _ => return Err(DataError::CheckpointKindMismatch),
        };
        Ok(CheckpointView {
            checkpoint,
            outcome_kind: self.outcome_kind,
            recruitment: self.recruitment,
            records,
        })
    }
}

impl CheckpointView {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.id).collect()
    }
}

/// Treated-minus-control differences per recruitment step. Steps missing
/// either arm are dropped, not imputed.
pub fn paired_differences(view: &CheckpointView) -> Result<PairedDifferences, DataError> {
    if view.outcome_kind != OutcomeKind::Gaussian {
        return Err(DataError::WrongOutcomeKind(OutcomeKind::Gaussian));
    }
    let mut diffs = Vec::new();
    let mut pair_ids = Vec::new();
    let mut dropped = 0usize;
    let mut i = 0;
    let records = &view.records;
    while i < records.len() {
        let step = records[i].arrival;
        let mut j = i;
        while j < records.len() && records[j].arrival == step {
            j += 1;
        }
        let group = &records[i..j];
        let treated = group.iter().find(|r| r.treatment);
        let control = group.iter().find(|r| !r.treatment);
        match (treated, control) {
            (Some(t), Some(c)) => {
                diffs.push(t.y() - c.y());
                pair_ids.push((t.id, c.id));
                dropped += group.len() - 2;
            }
            _ => dropped += group.len(),
        }
        i = j;
    }
    if diffs.is_empty() {
        return Err(DataError::NoCompletePairs);
    }
    Ok(PairedDifferences { diffs, pair_ids, dropped })
}

fn parse_field(field: &str, line: u64, col: &str) -> Result<f64, DataError> {
    field.trim().parse::<f64>().map_err(|_| DataError::Malformed {
        line,
        msg: format!("cannot parse {col} value '{field}'"),
    })
}

fn parse_binary(field: &str, line: u64, treatment: bool) -> Result<bool, DataError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => {
            // tolerate float spellings of exactly 0/1
            if let Ok(v) = other.parse::<f64>() {
                if v == 0.0 {
                    return Ok(false);
                }
                if v == 1.0 {
                    return Ok(true);
                }
            }
            if treatment {
                Err(DataError::TreatmentNotBinary(line))
            } else {
                Err(DataError::EventNotBinary(line))
            }
        }
    }
}

struct Schema {
    id: usize,
    arrival: usize,
    d: usize,
    xs: Vec<usize>,
    y: Option<usize>,
    time: Option<usize>,
    event: Option<usize>,
    g: Option<usize>,
    tau: Option<usize>,
}

fn read_header(header: &csv::StringRecord, kind: OutcomeKind) -> Result<Schema, DataError> {
    let mut id = None;
    let mut arrival = None;
    let mut d = None;
    let mut y = None;
    let mut time = None;
    let mut event = None;
    let mut g = None;
    let mut tau = None;
    let mut xs: Vec<(usize, usize)> = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        let name = name.trim();
        match name {
            "id" => id = Some(pos),
            "t" | "accrual" => arrival = Some(pos),
            "d" => d = Some(pos),
            "y" => y = Some(pos),
            "time" => time = Some(pos),
            "event" => event = Some(pos),
            "g" => g = Some(pos),
            "tau" => tau = Some(pos),
            _ => {
                if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    xs.push((idx, pos));
                } else {
                    return Err(DataError::UnknownColumn(name.to_string()));
                }
            }
        }
    }
    xs.sort();
    for (want, &(idx, _)) in xs.iter().enumerate() {
        if idx != want + 1 {
            return Err(DataError::Malformed {
                line: 1,
                msg: format!("covariate columns must be x1..xd, found x{idx}"),
            });
        }
    }
    match kind {
        OutcomeKind::Gaussian => {
            if time.is_some() || event.is_some() {
                return Err(DataError::MixedOutcome("time/event".to_string()));
            }
            if y.is_none() {
                return Err(DataError::MissingColumn("y"));
            }
        }
        OutcomeKind::Tte => {
            if y.is_some() {
                return Err(DataError::MixedOutcome("y".to_string()));
            }
            if time.is_none() {
                return Err(DataError::MissingColumn("time"));
            }
            if event.is_none() {
                return Err(DataError::MissingColumn("event"));
            }
        }
    }
    Ok(Schema {
        id: id.ok_or(DataError::MissingColumn("id"))?,
        arrival: arrival.ok_or(DataError::MissingColumn(match kind {
            OutcomeKind::Gaussian => "t",
            OutcomeKind::Tte => "accrual",
        }))?,
        d: d.ok_or(DataError::MissingColumn("d"))?,
        xs: xs.into_iter().map(|(_, pos)| pos).collect(),
        y,
        time,
        event,
        g,
        tau,
    })
}

/// Reads a dataset from CSV. Gaussian schema `id,t,d,x1..xd,y[,g,tau]`,
/// time-to-event schema `id,accrual,d,x1..xd,time,event[,g,tau]`. Columns
/// are matched by name, so order is free; the header row is required.
pub fn ingest_csv<R: io::Read>(reader: R, kind: OutcomeKind) -> Result<ExperimentDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let schema = read_header(rdr.headers()?, kind)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |pos: usize| -> Result<&str, DataError> {
            row.get(pos).ok_or(DataError::Malformed {
                line,
                msg: "row shorter than header".to_string(),
            })
        };
        let id = parse_field(field(schema.id)?, line, "id")? as u64;
        let arrival = parse_field(field(schema.arrival)?, line, "arrival")?;
        let treatment = parse_binary(field(schema.d)?, line, true)?;
        let mut covariates = Vec::with_capacity(schema.xs.len());
        for (k, &pos) in schema.xs.iter().enumerate() {
            covariates.push(parse_field(field(pos)?, line, &format!("x{}", k + 1))?);
        }
        let outcome = match kind {
            OutcomeKind::Gaussian => Outcome::Gaussian {
                y: parse_field(field(schema.y.unwrap())?, line, "y")?,
            },
            OutcomeKind::Tte => {
                let time = parse_field(field(schema.time.unwrap())?, line, "time")?;
                if !(time > 0.0) {
                    return Err(DataError::NonPositiveTime(line));
                }
                let event = parse_binary(field(schema.event.unwrap())?, line, false)?;
                Outcome::Tte { time, event }
            }
        };
        let true_group = match schema.g {
            Some(pos) => {
                let raw = field(pos)?;
                if raw.trim().is_empty() {
                    None
                } else {
                    Some(parse_field(raw, line, "g")? as i64)
                }
            }
            None => None,
        };
        let true_cate = match schema.tau {
            Some(pos) => {
                let raw = field(pos)?;
                if raw.trim().is_empty() {
                    None
                } else {
                    Some(parse_field(raw, line, "tau")?)
                }
            }
            None => None,
        };
        records.push(ParticipantRecord {
            id,
            arrival,
            treatment,
            covariates,
            outcome,
            true_group,
            true_cate,
        });
    }
    let recruitment = match kind {
        OutcomeKind::Gaussian => RecruitmentModel::PairedSteps,
        OutcomeKind::Tte => RecruitmentModel::Accrual {
            accrual_months: records.iter().map(|r| r.arrival).fold(0.0, f64::max),
            study_months: None,
        },
    };
    ExperimentDataset::new(records, kind, recruitment)
}

/// Writes the canonical CSV schema for the dataset. The optional g/tau
/// columns appear only when every record carries them.
pub fn write_csv<W: io::Write>(ds: &ExperimentDataset, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = ds.records.first().map_or(0, |r| r.covariates.len());
    let with_truth = !ds.records.is_empty()
        && ds.records.iter().all(|r| r.true_group.is_some() && r.true_cate.is_some());
    let mut header = vec!["id".to_string()];
    header.push(
        match ds.outcome_kind {
            OutcomeKind::Gaussian => "t",
            OutcomeKind::Tte => "accrual",
        }
        .to_string(),
    );
    header.push("d".to_string());
    for k in 1..=dim {
        header.push(format!("x{k}"));
    }
    match ds.outcome_kind {
        OutcomeKind::Gaussian => header.push("y".to_string()),
        OutcomeKind::Tte => {
            header.push("time".to_string());
            header.push("event".to_string());
        }
    }
    if with_truth {
        header.push("g".to_string());
        header.push("tau".to_string());
    }
    wtr.write_record(&header)?;
    for r in &ds.records {
        let mut row = vec![r.id.to_string(), format!("{}", r.arrival), format!("{}", r.d() as u8)];
        for x in &r.covariates {
            row.push(format!("{x}"));
        }
        match r.outcome {
            Outcome::Gaussian { y } => row.push(format!("{y}")),
            Outcome::Tte { time, event } => {
                row.push(format!("{time}"));
                row.push(format!("{}", event as u8));
            }
        }
        if with_truth {
            row.push(format!("{}", r.true_group.unwrap()));
            row.push(format!("{}", r.true_cate.unwrap()));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
