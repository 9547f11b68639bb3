//! Right-censored, left-truncated two-time-scale event data: ingestion,
//! validation, and alignment onto a product grid.
//!
//! The at-risk indicator is not a separate column; leaving observation simply
//! censors every covariate path to the zero vector, so design rows vanish
//! outside a subject's window.

use crate::grid::TwoScaleGrid;
use ndarray::{Array1, Array2, Array3};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no subjects in input")]
    NoSubjects,
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("line {line}: expected {expected} columns, got {actual}")]
    ColumnCount {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("missing header column `{0}`")]
    MissingColumn(String),
    #[error("subject {id}: exit_time must be positive, got {exit}")]
    NonPositiveExit { id: String, exit: f64 },
    #[error("subject {id}: exit_time {exit} exceeds t_max {t_max}")]
    ExitBeyondRange { id: String, exit: f64, t_max: f64 },
    #[error("subject {id}: entry age {entry} below a0 {a0}")]
    EntryBelowRange { id: String, entry: f64, a0: f64 },
    #[error("subject {id}: exit age {exit_age} exceeds a_max {a_max}")]
    ExitAgeBeyondRange {
        id: String,
        exit_age: f64,
        a_max: f64,
    },
    #[error("subject {id}: covariate path dimension {actual}, expected {expected}")]
    PathDimension {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("subject {id}: shared design columns 1..{d} differ between the two scales")]
    SharedColumnsDiffer { id: String, d: usize },
    #[error("shared column count d={d} exceeds min(p,q)=min({p},{q})")]
    SharedTooLarge { d: usize, p: usize, q: usize },
    #[error("covariate path must start at change point 0, got {0}")]
    PathStart(f64),
    #[error("covariate path change points must be strictly increasing")]
    PathOrder,
    #[error("cannot serialize a time-varying covariate path to one CSV row")]
    PathNotConstant,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Piecewise-constant left-continuous vector path on `[0, exit]`.
/// Segment r holds on `(change_points[r], change_points[r+1]]`; the value at
/// 0 is taken from the first segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    change_points: Vec<f64>,
    values: Vec<Array1<f64>>,
}

impl CovariatePath {
    pub fn new(change_points: Vec<f64>, values: Vec<Array1<f64>>) -> Result<Self, DataError> {
        assert_eq!(change_points.len(), values.len());
        if change_points.first().copied() != Some(0.0) {
            return Err(DataError::PathStart(
                change_points.first().copied().unwrap_or(f64::NAN),
            ));
        }
        if change_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DataError::PathOrder);
        }
        Ok(Self {
            change_points,
            values,
        })
    }

    pub fn constant(value: Array1<f64>) -> Self {
        Self {
            change_points: vec![0.0],
            values: vec![value],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }

    /// Left-continuous value at duration t >= 0 (t = 0 reads the first segment).
    pub fn value_at(&self, t: f64) -> &Array1<f64> {
        if t <= self.change_points[0] {
            return &self.values[0];
        }
        // segment r is active on (c_r, c_{r+1}]; pick the largest r with c_r < t
        let idx = match self
            .change_points
            .binary_search_by(|c| c.partial_cmp(&t).unwrap())
        {
            Ok(r) => r.saturating_sub(1),
            Err(ins) => ins - 1,
        };
        &self.values[idx]
    }
}

/// One individual: entry age on the second scale, observed window on the
/// duration scale, event flag, and covariate paths for both designs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub entry_age: f64,
    pub exit_time: f64,
    pub event: bool,
    pub covariates_x: CovariatePath,
    pub covariates_z: CovariatePath,
}

impl SubjectRecord {
    pub fn exit_age(&self) -> f64 {
        self.entry_age + self.exit_time
    }
}

/// A validated cohort plus the design layout shared by all subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectCohort {
    pub subjects: Vec<SubjectRecord>,
    pub p: usize,
    pub q: usize,
    /// Number of leading columns shared between the two designs.
    pub d: usize,
    pub t_max: f64,
    pub a0: f64,
    pub a_max: f64,
}

impl SubjectCohort {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        d: usize,
        t_max: f64,
        a0: f64,
        a_max: f64,
    ) -> Result<Self, DataError> {
        if subjects.is_empty() {
            return Err(DataError::NoSubjects);
        }
        let p = subjects[0].covariates_x.dim();
        let q = subjects[0].covariates_z.dim();
        if d > p.min(q) {
            return Err(DataError::SharedTooLarge { d, p, q });
        }
        for s in &subjects {
            if s.covariates_x.dim() != p {
                return Err(DataError::PathDimension {
                    id: s.id.clone(),
                    expected: p,
                    actual: s.covariates_x.dim(),
                });
            }
            if s.covariates_z.dim() != q {
                return Err(DataError::PathDimension {
                    id: s.id.clone(),
                    expected: q,
                    actual: s.covariates_z.dim(),
                });
            }
            if !(s.exit_time > 0.0) {
                return Err(DataError::NonPositiveExit {
                    id: s.id.clone(),
                    exit: s.exit_time,
                });
            }
            if s.exit_time > t_max {
                return Err(DataError::ExitBeyondRange {
                    id: s.id.clone(),
                    exit: s.exit_time,
                    t_max,
                });
            }
            if s.entry_age < a0 {
                return Err(DataError::EntryBelowRange {
                    id: s.id.clone(),
                    entry: s.entry_age,
                    a0,
                });
            }
            if s.exit_age() > a_max {
                return Err(DataError::ExitAgeBeyondRange {
                    id: s.id.clone(),
                    exit_age: s.exit_age(),
                    a_max,
                });
            }
            // shared leading columns must coincide pathwise
            if d > 0 {
                let same_breaks =
                    s.covariates_x.change_points == s.covariates_z.change_points;
                let same_values = same_breaks
                    && s.covariates_x
                        .values
                        .iter()
                        .zip(s.covariates_z.values.iter())
                        .all(|(x, z)| (0..d).all(|c| x[c] == z[c]));
                if !same_values {
                    return Err(DataError::SharedColumnsDiffer { id: s.id.clone(), d });
                }
            }
        }
        Ok(Self {
            subjects,
            p,
            q,
            d,
            t_max,
            a0,
            a_max,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }
}

/// Column layout of a delimited input file: shared columns are listed once and
/// duplicated into both designs on ingestion.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    pub shared: Vec<String>,
    pub x_only: Vec<String>,
    pub z_only: Vec<String>,
}

impl CsvSchema {
    /// Every covariate column is shared (the common one-design case).
    pub fn all_shared(columns: Vec<String>) -> Self {
        Self {
            shared: columns,
            x_only: vec![],
            z_only: vec![],
        }
    }

    pub fn d(&self) -> usize {
        self.shared.len()
    }

    pub fn p(&self) -> usize {
        self.shared.len() + self.x_only.len()
    }

    pub fn q(&self) -> usize {
        self.shared.len() + self.z_only.len()
    }
}

/// Range bounds for a cohort; any `None` is inferred from the data.
#[derive(Debug, Clone, Copy, Default)]
pub struct CohortBounds {
    pub t_max: Option<f64>,
    pub a0: Option<f64>,
    pub a_max: Option<f64>,
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    line: usize,
    what: &str,
) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| DataError::MalformedRow {
        line,
        msg: format!("cannot parse {what} from `{raw}`"),
    })
}

/// Parse delimiter-separated subject rows into a validated cohort.
///
/// Expected header: `id,entry_age,exit_time,event` followed by the covariate
/// columns named in the schema. Covariates given this way are constant over
/// each subject's observation window.
pub fn parse_subjects<R: Read>(
    reader: R,
    schema: &CsvSchema,
    bounds: CohortBounds,
) -> Result<SubjectCohort, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = col("id")?;
    let entry_col = col("entry_age")?;
    let exit_col = col("exit_time")?;
    let event_col = col("event")?;
    let shared_cols: Vec<usize> = schema
        .shared
        .iter()
        .map(|n| col(n))
        .collect::<Result<_, _>>()?;
    let x_cols: Vec<usize> = schema
        .x_only
        .iter()
        .map(|n| col(n))
        .collect::<Result<_, _>>()?;
    let z_cols: Vec<usize> = schema
        .z_only
        .iter()
        .map(|n| col(n))
        .collect::<Result<_, _>>()?;

    let expected_cols = headers.len();
    let mut subjects = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let record = record?;
        if record.len() != expected_cols {
            return Err(DataError::ColumnCount {
                line,
                expected: expected_cols,
                actual: record.len(),
            });
        }
        let id: String = record[id_col].to_string();
        let entry_age: f64 = parse_field(&record[entry_col], line, "entry_age")?;
        let exit_time: f64 = parse_field(&record[exit_col], line, "exit_time")?;
        let event_raw: i64 = parse_field(&record[event_col], line, "event")?;
        let event = match event_raw {
            0 => false,
            1 => true,
            other => {
                return Err(DataError::MalformedRow {
                    line,
                    msg: format!("event flag must be 0 or 1, got {other}"),
                })
            }
        };
        if !(exit_time > 0.0) {
            return Err(DataError::NonPositiveExit { id, exit: exit_time });
        }

        let mut x_vals = Vec::with_capacity(schema.p());
        let mut z_vals = Vec::with_capacity(schema.q());
        for &c in &shared_cols {
            let v: f64 = parse_field(&record[c], line, "covariate")?;
            x_vals.push(v);
            z_vals.push(v);
        }
        for &c in &x_cols {
            x_vals.push(parse_field(&record[c], line, "covariate")?);
        }
        for &c in &z_cols {
            z_vals.push(parse_field(&record[c], line, "covariate")?);
        }

        subjects.push(SubjectRecord {
            id,
            entry_age,
            exit_time,
            event,
            covariates_x: CovariatePath::constant(Array1::from(x_vals)),
            covariates_z: CovariatePath::constant(Array1::from(z_vals)),
        });
    }
    if subjects.is_empty() {
        return Err(DataError::NoSubjects);
    }

    let t_max = bounds.t_max.unwrap_or_else(|| {
        subjects
            .iter()
            .map(|s| s.exit_time)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let a0 = bounds.a0.unwrap_or_else(|| {
        subjects
            .iter()
            .map(|s| s.entry_age)
            .fold(f64::INFINITY, f64::min)
    });
    let a_max = bounds.a_max.unwrap_or_else(|| {
        subjects
            .iter()
            .map(|s| s.exit_age())
            .fold(f64::NEG_INFINITY, f64::max)
    });

    SubjectCohort::new(subjects, schema.d(), t_max, a0, a_max)
}

/// Serialize a constant-covariate cohort back to the CSV layout accepted by
/// `parse_subjects`. Floats use the shortest round-tripping representation,
/// so write-then-parse is lossless.
pub fn write_subjects<W: Write>(
    writer: W,
    cohort: &SubjectCohort,
    schema: &CsvSchema,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "id".to_string(),
        "entry_age".to_string(),
        "exit_time".to_string(),
        "event".to_string(),
    ];
    header.extend(schema.shared.iter().cloned());
    header.extend(schema.x_only.iter().cloned());
    header.extend(schema.z_only.iter().cloned());
    wtr.write_record(&header)?;

    let d = schema.d();
    for s in &cohort.subjects {
        if !s.covariates_x.is_constant() || !s.covariates_z.is_constant() {
            return Err(DataError::PathNotConstant);
        }
        let x = s.covariates_x.value_at(0.0);
        let z = s.covariates_z.value_at(0.0);
        let mut row = vec![
            s.id.clone(),
            format!("{}", s.entry_age),
            format!("{}", s.exit_time),
            if s.event { "1".into() } else { "0".into() },
        ];
        for c in 0..d {
            row.push(format!("{}", x[c]));
        }
        for c in d..cohort.p {
            row.push(format!("{}", x[c]));
        }
        for c in d..cohort.q {
            row.push(format!("{}", z[c]));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Event increments and grid-aligned design rows for every cell on both axes.
///
/// Exits are snapped to the next grid point on each axis, which is the same
/// thing as evaluating the risk set just after the previous grid point; a
/// subject therefore stays in the design through the cell holding its event.
#[derive(Debug, Clone)]
pub struct IncrementMatrix {
    pub grid: TwoScaleGrid,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub d: usize,
    pub entry_ages: Vec<f64>,
    /// Duration cell index of each subject's event, if any.
    pub event_cell_duration: Vec<Option<usize>>,
    /// Age cell index of each subject's event, if any.
    pub event_cell_age: Vec<Option<usize>>,
    /// (j x n) 0/1 event increments on the duration grid.
    pub dn_duration: Array2<f64>,
    /// (k x n) 0/1 event increments on the age grid.
    pub dn_age: Array2<f64>,
    /// (j x n x p) duration-scale design rows at each grid point.
    pub x_duration: Array3<f64>,
    /// (j x n x q) the second design evaluated on the duration grid.
    pub z_duration: Array3<f64>,
    /// (k x n x p) age-shifted first design, row i at age u is X_i(u - a_i).
    pub x_age: Array3<f64>,
    /// (k x n x q) age-shifted second design.
    pub z_age: Array3<f64>,
}

impl IncrementMatrix {
    pub fn stacked_len(&self) -> usize {
        self.p * self.grid.duration.len() + self.q * self.grid.age.len()
    }
}

/// Grid-aligned design value of one subject at a duration offset `v` from its
/// own entry: zero outside the snapped at-risk window, last observed value
/// carried through the snapped exit cell.
fn aligned_value(path: &CovariatePath, exit: f64, window_hi: f64, v: f64) -> Option<&Array1<f64>> {
    if v < 0.0 || v > window_hi {
        None
    } else {
        Some(path.value_at(v.min(exit)))
    }
}

/// Align a cohort onto a grid: snap events right, evaluate designs
/// left-continuously at the grid points, and shift rows onto the age axis.
pub fn counting_increments(
    cohort: &SubjectCohort,
    grid: &TwoScaleGrid,
) -> Result<IncrementMatrix, DataError> {
    let n = cohort.len();
    let j = grid.duration.len();
    let k = grid.age.len();
    let (p, q) = (cohort.p, cohort.q);

    let mut dn_duration = Array2::zeros((j, n));
    let mut dn_age = Array2::zeros((k, n));
    let mut x_duration = Array3::zeros((j, n, p));
    let mut z_duration = Array3::zeros((j, n, q));
    let mut x_age = Array3::zeros((k, n, p));
    let mut z_age = Array3::zeros((k, n, q));
    let mut event_cell_duration = vec![None; n];
    let mut event_cell_age = vec![None; n];

    for (i, s) in cohort.subjects.iter().enumerate() {
        let exit_cell_t = grid.duration.ceil_index(s.exit_time).ok_or_else(|| {
            DataError::ExitBeyondRange {
                id: s.id.clone(),
                exit: s.exit_time,
                t_max: grid.t_max(),
            }
        })?;
        let entry_cell_a =
            grid.age
                .ceil_index(s.entry_age)
                .ok_or_else(|| DataError::ExitAgeBeyondRange {
                    id: s.id.clone(),
                    exit_age: s.entry_age,
                    a_max: grid.a_max(),
                })?;
        let exit_cell_a = grid.age.ceil_index(s.exit_age()).ok_or_else(|| {
            DataError::ExitAgeBeyondRange {
                id: s.id.clone(),
                exit_age: s.exit_age(),
                a_max: grid.a_max(),
            }
        })?;

        if s.event {
            event_cell_duration[i] = Some(exit_cell_t);
            event_cell_age[i] = Some(exit_cell_a);
            dn_duration[[exit_cell_t, i]] = 1.0;
            dn_age[[exit_cell_a, i]] = 1.0;
        }

        // duration axis: at risk from cell 0 through the snapped exit cell
        let window_t = grid.duration.points[exit_cell_t];
        for l in 0..=exit_cell_t {
            let t = grid.duration.points[l];
            if let Some(xv) = aligned_value(&s.covariates_x, s.exit_time, window_t, t) {
                for c in 0..p {
                    x_duration[[l, i, c]] = xv[c];
                }
            }
            if let Some(zv) = aligned_value(&s.covariates_z, s.exit_time, window_t, t) {
                for c in 0..q {
                    z_duration[[l, i, c]] = zv[c];
                }
            }
        }

        // age axis: shifted rows C_i(u - a_i) within the snapped entry/exit cells
        let window_a = grid.age.points[exit_cell_a] - s.entry_age;
        for m in entry_cell_a..=exit_cell_a {
            let v = grid.age.points[m] - s.entry_age;
            if let Some(xv) = aligned_value(&s.covariates_x, s.exit_time, window_a, v) {
                for c in 0..p {
                    x_age[[m, i, c]] = xv[c];
                }
            }
            if let Some(zv) = aligned_value(&s.covariates_z, s.exit_time, window_a, v) {
                for c in 0..q {
                    z_age[[m, i, c]] = zv[c];
                }
            }
        }
    }

    Ok(IncrementMatrix {
        grid: grid.clone(),
        n,
        p,
        q,
        d: cohort.d,
        entry_ages: cohort.subjects.iter().map(|s| s.entry_age).collect(),
        event_cell_duration,
        event_cell_age,
        dn_duration,
        dn_age,
        x_duration,
        z_duration,
        x_age,
        z_age,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TwoScaleGrid;
    use ndarray::array;

    fn schema_y() -> CsvSchema {
        CsvSchema::all_shared(vec!["y".into()])
    }

    fn toy_csv() -> &'static str {
        "id,entry_age,exit_time,event,y\ns1,0,1,1,1\ns2,2,3,0,1\n"
    }

    #[test]
    fn parses_minimal_two_row_file() {
        let cohort =
            parse_subjects(toy_csv().as_bytes(), &schema_y(), CohortBounds::default()).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort.d, 1);
        assert_eq!((cohort.p, cohort.q), (1, 1));
        assert_eq!(cohort.t_max, 3.0);
        assert_eq!(cohort.a0, 0.0);
        assert_eq!(cohort.a_max, 5.0);
        assert!(cohort.subjects[0].event);
        assert!(!cohort.subjects[1].event);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let err = parse_subjects(
            "id,entry_age,exit_time,event,y\n".as_bytes(),
            &schema_y(),
            CohortBounds::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::NoSubjects));
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let bad_event = "id,entry_age,exit_time,event,y\ns1,0,1,2,1\n";
        let err = parse_subjects(bad_event.as_bytes(), &schema_y(), CohortBounds::default())
            .unwrap_err();
        match err {
            DataError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }

        let bad_exit = "id,entry_age,exit_time,event,y\ns1,0,0,1,1\n";
        assert!(matches!(
            parse_subjects(bad_exit.as_bytes(), &schema_y(), CohortBounds::default()),
            Err(DataError::NonPositiveExit { .. })
        ));

        let bad_float = "id,entry_age,exit_time,event,y\ns1,zero,1,1,1\n";
        assert!(matches!(
            parse_subjects(bad_float.as_bytes(), &schema_y(), CohortBounds::default()),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let cohort =
            parse_subjects(toy_csv().as_bytes(), &schema_y(), CohortBounds::default()).unwrap();
        let mut buf = Vec::new();
        write_subjects(&mut buf, &cohort, &schema_y()).unwrap();
        let reparsed =
            parse_subjects(buf.as_slice(), &schema_y(), CohortBounds::default()).unwrap();
        assert_eq!(cohort, reparsed);
    }

    #[test]
    fn shared_columns_must_match() {
        let x = CovariatePath::constant(array![1.0]);
        let z = CovariatePath::constant(array![2.0]);
        let subject = SubjectRecord {
            id: "s".into(),
            entry_age: 0.0,
            exit_time: 1.0,
            event: false,
            covariates_x: x,
            covariates_z: z,
        };
        let err = SubjectCohort::new(vec![subject], 1, 1.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, DataError::SharedColumnsDiffer { .. }));
    }

    #[test]
    fn path_evaluation_is_left_continuous() {
        let path = CovariatePath::new(
            vec![0.0, 1.0, 2.0],
            vec![array![10.0], array![20.0], array![30.0]],
        )
        .unwrap();
        assert_eq!(path.value_at(0.0)[0], 10.0);
        assert_eq!(path.value_at(0.5)[0], 10.0);
        assert_eq!(path.value_at(1.0)[0], 10.0); // value at a change point comes from the left
        assert_eq!(path.value_at(1.5)[0], 20.0);
        assert_eq!(path.value_at(2.0)[0], 20.0);
        assert_eq!(path.value_at(2.5)[0], 30.0);
    }

    #[test]
    fn event_on_grid_point_lands_in_that_cell() {
        let csv = "id,entry_age,exit_time,event,y\ns1,0,0.5,1,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 5, 5).unwrap(); // spacing 0.25
        let inc = counting_increments(&cohort, &grid).unwrap();
        assert_eq!(inc.event_cell_duration[0], Some(2));
        assert_eq!(inc.dn_duration.column(0).sum(), 1.0);
        assert_eq!(inc.dn_duration[[2, 0]], 1.0);
    }

    #[test]
    fn event_between_grid_points_snaps_right() {
        let csv = "id,entry_age,exit_time,event,y\ns1,0,0.3,1,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 5, 5).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        // 0.25 < 0.3 < 0.5 snaps to cell 2 (grid point 0.5)
        assert_eq!(inc.event_cell_duration[0], Some(2));
        // subject stays in the design through its event cell, not beyond
        assert_eq!(inc.x_duration[[2, 0, 0]], 1.0);
        assert_eq!(inc.x_duration[[3, 0, 0]], 0.0);
    }

    #[test]
    fn shifted_rows_match_unshifted_at_offset() {
        let csv = "id,entry_age,exit_time,event,y\ns1,2,1,0,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(3.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 3.0, 5, 13).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        for m in 0..13 {
            let u = grid.age.points[m];
            let v = u - 2.0;
            let expected = if v >= 0.0 && v <= grid.age.points[grid.age.ceil_index(3.0).unwrap()] - 2.0
            {
                1.0
            } else {
                0.0
            };
            assert_eq!(inc.x_age[[m, 0, 0]], expected, "age point {u}");
        }
    }

    #[test]
    fn total_events_match_cohort() {
        let csv = "id,entry_age,exit_time,event,y\n\
                   a,0,0.4,1,1\nb,1,0.9,0,1\nc,2,0.7,1,1\nd,0.5,1.0,1,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(3.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 3.0, 7, 11).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        assert_eq!(inc.dn_duration.sum(), cohort.event_count() as f64);
        assert_eq!(inc.dn_age.sum(), cohort.event_count() as f64);
        for i in 0..cohort.len() {
            assert!(inc.dn_duration.column(i).sum() <= 1.0);
        }
    }
}
