//! Fixed-format MPS export and import for [`IpModel`].
//!
//! Records use the classical field columns (2, 5, 15, 25, 40, 50). Names that
//! outgrow their eight-character field push later fields right but stay
//! separated by whitespace; the reader splits on whitespace. MPS minimizes, so
//! objective coefficients are written negated. Rows are named `G<g>`, `C<j>`
//! and `F<j>`, the objective row `REVENUE`, and every column sits between
//! `INTORG`/`INTEND` markers.

use std::fmt::{self, Write as _};
use std::io::{self, Write};

use thiserror::Error;

use super::{IpModel, RowRef, Variable};
use crate::domain::Money;

const OBJECTIVE_ROW: &str = "REVENUE";
const RHS_SET: &str = "RHS";
const BOUND_SET: &str = "BND";

/// 0-based start of each classical field.
const FIELD_COLUMNS: [usize; 6] = [1, 4, 14, 24, 39, 49];

/// One output line, assembled in a reused buffer.
struct Record {
    line: String,
}

impl Record {
    fn field(&mut self, k: usize, value: impl fmt::Display) -> &mut Self {
        let col = FIELD_COLUMNS[k];
        if self.line.len() < col {
            let pad = col - self.line.len();
            self.line.extend(std::iter::repeat_n(' ', pad));
        } else {
            self.line.push(' ');
        }
        write!(self.line, "{value}").expect("writing to a String cannot fail");
        self
    }

    fn emit(&mut self, out: &mut impl Write) -> io::Result<()> {
        self.line.push('\n');
        out.write_all(self.line.as_bytes())?;
        self.line.clear();
        Ok(())
    }
}

struct ColumnName(usize, usize);

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Y{}_{}", self.0, self.1)
    }
}

/// Writes `model` as fixed-format MPS. Output is byte-deterministic.
pub fn export_mps(model: &IpModel, out: &mut impl Write) -> io::Result<()> {
    let name = if model.name.is_empty() {
        super::DEFAULT_MODEL_NAME
    } else {
        model.name.as_str()
    };
    writeln!(out, "{:<14}{name}", "NAME")?;
    writeln!(out, "ROWS")?;
    let mut rec = Record {
        line: String::with_capacity(96),
    };
    rec.field(0, "N").field(1, OBJECTIVE_ROW).emit(out)?;
    for row in model.rows() {
        let sense = if matches!(row, RowRef::Floor(_)) {
            "G"
        } else {
            "L"
        };
        rec.field(0, sense).field(1, row).emit(out)?;
    }

    if !model.variables.is_empty() {
        writeln!(out, "COLUMNS")?;
        rec.field(1, "MARKER")
            .field(2, "'MARKER'")
            .field(3, "'INTORG'")
            .emit(out)?;
        let mut entries: Vec<RowRef> = Vec::with_capacity(3);
        for v in &model.variables {
            entries.clear();
            let objective = (v.price != Money::ZERO).then(|| Money(-v.price.micros()));
            entries.push(RowRef::Group(v.group));
            entries.push(RowRef::Campaign(v.campaign));
            if model.floors.is_some() {
                entries.push(RowRef::Floor(v.campaign));
            }
            let col = ColumnName(v.group, v.campaign);
            let mut k = 0;
            if let Some(cost) = objective {
                rec.field(1, &col)
                    .field(2, OBJECTIVE_ROW)
                    .field(3, cost)
                    .field(4, entries[0])
                    .field(5, 1)
                    .emit(out)?;
                k = 1;
            }
            for pair in entries[k..].chunks(2) {
                rec.field(1, &col).field(2, pair[0]).field(3, 1);
                if let Some(&row) = pair.get(1) {
                    rec.field(4, row).field(5, 1);
                }
                rec.emit(out)?;
            }
        }
        rec.field(1, "MARKER")
            .field(2, "'MARKER'")
            .field(3, "'INTEND'")
            .emit(out)?;
    }

    let rhs: Vec<(RowRef, u64)> = model
        .rows()
        .into_iter()
        .filter_map(|row| {
            let value = match row {
                RowRef::Group(g) => model.group_caps[g],
                RowRef::Campaign(j) => model.campaign_caps[j],
                RowRef::Floor(j) => model.floors.as_ref().map_or(0, |f| f[j]),
            };
            (value != 0).then_some((row, value))
        })
        .collect();
    if !rhs.is_empty() {
        writeln!(out, "RHS")?;
        for pair in rhs.chunks(2) {
            rec.field(1, RHS_SET)
                .field(2, pair[0].0)
                .field(3, pair[0].1);
            if let Some(&(row, value)) = pair.get(1) {
                rec.field(4, row).field(5, value);
            }
            rec.emit(out)?;
        }
    }

    if !model.variables.is_empty() {
        writeln!(out, "BOUNDS")?;
        for v in &model.variables {
            rec.field(0, "UP")
                .field(1, BOUND_SET)
                .field(2, ColumnName(v.group, v.campaign))
                .field(3, v.upper)
                .emit(out)?;
        }
    }
    writeln!(out, "ENDATA")
}

pub fn export_mps_to_string(model: &IpModel) -> String {
    let mut buf = Vec::new();
    export_mps(model, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("MPS output is ASCII")
}

struct CountingWriter(u64);

impl Write for CountingWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Size in bytes of the MPS rendering, without materializing it.
pub fn mps_size(model: &IpModel) -> u64 {
    let mut w = io::BufWriter::with_capacity(1 << 16, CountingWriter(0));
    export_mps(model, &mut w).expect("counting writer cannot fail");
    w.into_inner().map(|c| c.0).unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> MpsError {
    MpsError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Start,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

fn parse_row_name(name: &str, line: usize) -> Result<RowRef, MpsError> {
    let (kind, index) = name.split_at(name.len().min(1));
    let index: usize = index
        .parse()
        .map_err(|_| parse_err(line, format!("unrecognized row name {name:?}")))?;
    match kind {
        "G" => Ok(RowRef::Group(index)),
        "C" => Ok(RowRef::Campaign(index)),
        "F" => Ok(RowRef::Floor(index)),
        _ => Err(parse_err(line, format!("unrecognized row name {name:?}"))),
    }
}

fn parse_count(text: &str, line: usize) -> Result<u64, MpsError> {
    text.parse().map_err(|_| {
        parse_err(
            line,
            format!("expected a non-negative integer, found {text:?}"),
        )
    })
}

#[derive(Default)]
struct PendingColumn {
    name: String,
    group: Option<usize>,
    campaign: Option<usize>,
    floor: Option<usize>,
    price: Money,
    line: usize,
}

/// Reads the dialect written by [`export_mps`].
pub fn import_mps(text: &str) -> Result<IpModel, MpsError> {
    let mut section = Section::Start;
    let mut model = IpModel::default();
    let mut group_rows = 0usize;
    let mut campaign_rows = 0usize;
    let mut floor_rows = 0usize;
    let mut objective_seen = false;
    let mut in_integer_block = false;
    let mut columns: Vec<PendingColumn> = Vec::new();
    let mut ended = false;
    let mut bounds_seen = std::collections::HashSet::new();
    let mut rhs_values: Vec<(RowRef, u64)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        if ended {
            if raw.trim().is_empty() {
                continue;
            }
            return Err(parse_err(line, "content after ENDATA"));
        }
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            match fields[0] {
                "NAME" => {
                    if section != Section::Start {
                        return Err(parse_err(line, "NAME must come first"));
                    }
                    model.name = fields.get(1..).map(|f| f.join(" ")).unwrap_or_default();
                }
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => ended = true,
                other => return Err(parse_err(line, format!("unknown section {other:?}"))),
            }
            continue;
        }
        match section {
            Section::Start => return Err(parse_err(line, "record before NAME/ROWS")),
            Section::Rows => {
                let [sense, name] = fields[..] else {
                    return Err(parse_err(line, "ROWS record needs a sense and a name"));
                };
                if sense == "N" {
                    if objective_seen || name != OBJECTIVE_ROW {
                        return Err(parse_err(
                            line,
                            format!("unexpected objective row {name:?}"),
                        ));
                    }
                    objective_seen = true;
                    continue;
                }
                let row = parse_row_name(name, line)?;
                let (expected_sense, counter) = match row {
                    RowRef::Group(g) => ("L", (g, &mut group_rows)),
                    RowRef::Campaign(j) => ("L", (j, &mut campaign_rows)),
                    RowRef::Floor(j) => ("G", (j, &mut floor_rows)),
                };
                if sense != expected_sense {
                    return Err(parse_err(
                        line,
                        format!("row {name} must have sense {expected_sense}"),
                    ));
                }
                let (index, count) = counter;
                if index != *count {
                    return Err(parse_err(line, format!("row {name} out of order")));
                }
                *count += 1;
            }
            Section::Columns => {
                if fields.len() == 3 && fields[1] == "'MARKER'" {
                    match fields[2] {
                        "'INTORG'" => in_integer_block = true,
                        "'INTEND'" => in_integer_block = false,
                        other => return Err(parse_err(line, format!("unknown marker {other}"))),
                    }
                    continue;
                }
                if !in_integer_block {
                    return Err(parse_err(line, "column outside INTORG/INTEND block"));
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(parse_err(line, "COLUMNS record needs one or two entries"));
                }
                let name = fields[0];
                if columns.last().is_none_or(|c| c.name != name) {
                    columns.push(PendingColumn {
                        name: name.to_string(),
                        line,
                        ..Default::default()
                    });
                }
                let col = columns.last_mut().expect("just pushed");
                for pair in fields[1..].chunks(2) {
                    let (row, value) = (pair[0], pair[1]);
                    if row == OBJECTIVE_ROW {
                        let cost: Money =
                            value.parse().map_err(|e| parse_err(line, format!("{e}")))?;
                        col.price = Money(-cost.micros());
                        continue;
                    }
                    if value != "1" {
                        return Err(parse_err(line, format!("coefficient {value} is not 1")));
                    }
                    let slot = match parse_row_name(row, line)? {
                        RowRef::Group(g) => (&mut col.group, g),
                        RowRef::Campaign(j) => (&mut col.campaign, j),
                        RowRef::Floor(j) => (&mut col.floor, j),
                    };
                    if slot.0.replace(slot.1).is_some() {
                        return Err(parse_err(line, format!("column {name} repeats a row kind")));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(parse_err(line, "RHS record needs one or two entries"));
                }
                for pair in fields[1..].chunks(2) {
                    let row = parse_row_name(pair[0], line)?;
                    rhs_values.push((row, parse_count(pair[1], line)?));
                }
            }
            Section::Bounds => {
                let [kind, _set, name, value] = fields[..] else {
                    return Err(parse_err(line, "BOUNDS record needs four fields"));
                };
                if kind != "UP" {
                    return Err(parse_err(line, format!("unsupported bound type {kind}")));
                }
                let upper = parse_count(value, line)?;
                let Some(k) = columns.iter().position(|c| c.name == name) else {
                    return Err(parse_err(line, format!("bound for unknown column {name}")));
                };
                if !bounds_seen.insert(k) {
                    return Err(parse_err(line, format!("duplicate bound for {name}")));
                }
                model.variables[k].upper = upper;
            }
        }
        // Materialize variables once COLUMNS is finished so BOUNDS can index them.
        if section != Section::Columns && model.variables.len() < columns.len() {
            finish_columns(&mut model, &columns, group_rows, campaign_rows, floor_rows)?;
        }
    }
    if !ended {
        return Err(parse_err(last_line + 1, "missing ENDATA"));
    }
    if !objective_seen {
        return Err(parse_err(last_line, "missing objective row"));
    }
    if model.variables.len() < columns.len() {
        finish_columns(&mut model, &columns, group_rows, campaign_rows, floor_rows)?;
    }
    if bounds_seen.len() != model.variables.len() {
        return Err(parse_err(last_line, "every column needs an UP bound"));
    }
    if floor_rows != 0 && floor_rows != campaign_rows {
        return Err(parse_err(last_line, "floor rows must mirror campaign rows"));
    }

    model.group_caps = vec![0; group_rows];
    model.campaign_caps = vec![0; campaign_rows];
    model.floors = (floor_rows > 0).then(|| vec![0; floor_rows]);
    for (row, value) in rhs_values {
        let slot = match row {
            RowRef::Group(g) => model.group_caps.get_mut(g),
            RowRef::Campaign(j) => model.campaign_caps.get_mut(j),
            RowRef::Floor(j) => model.floors.as_mut().and_then(|f| f.get_mut(j)),
        };
        *slot.ok_or_else(|| {
            parse_err(last_line, format!("RHS for undeclared row {}", row.name()))
        })? = value;
    }
    Ok(model)
}

fn finish_columns(
    model: &mut IpModel,
    columns: &[PendingColumn],
    group_rows: usize,
    campaign_rows: usize,
    floor_rows: usize,
) -> Result<(), MpsError> {
    model.variables.clear();
    for col in columns {
        let (Some(group), Some(campaign)) = (col.group, col.campaign) else {
            return Err(parse_err(
                col.line,
                format!("column {} lacks a group or campaign row", col.name),
            ));
        };
        if group >= group_rows || campaign >= campaign_rows {
            return Err(parse_err(
                col.line,
                format!("column {} references an undeclared row", col.name),
            ));
        }
        if floor_rows > 0 && col.floor != Some(campaign) {
            return Err(parse_err(
                col.line,
                format!("column {} floor row mismatch", col.name),
            ));
        }
        if floor_rows == 0 && col.floor.is_some() {
            return Err(parse_err(
                col.line,
                format!("column {} references an undeclared floor", col.name),
            ));
        }
        if let Some(prev) = model.variables.last() {
            if (prev.group, prev.campaign) >= (group, campaign) {
                return Err(parse_err(col.line, "columns are not in group-major order"));
            }
        }
        model.variables.push(Variable {
            group,
            campaign,
            upper: 0,
            price: col.price,
        });
    }
    Ok(())
}
