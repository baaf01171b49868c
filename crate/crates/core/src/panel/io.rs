//! CSV schemas for claims, unit metadata and the long-format panel export.
//!
//! `claims.csv`: `unit_id,calendar_month,kind,n_packages,pills_per_package`
//! `units.csv`: `unit_id,birth_year,first_child_month,employed,subsidy,cesarean`
//! with optional trailing `enrolled_from,enrolled_to` columns when some unit
//! is not insured for the whole window.

use std::io::{Read, Write};

use super::{ClaimKind, ClaimRecord, MonthRange, Panel, UnitMeta};
use crate::error::{Error, Result};

pub const CLAIMS_HEADER: [&str; 5] = [
    "unit_id",
    "calendar_month",
    "kind",
    "n_packages",
    "pills_per_package",
];
pub const UNITS_HEADER: [&str; 6] = [
    "unit_id",
    "birth_year",
    "first_child_month",
    "employed",
    "subsidy",
    "cesarean",
];
pub const ENROLLMENT_COLUMNS: [&str; 2] = ["enrolled_from", "enrolled_to"];
pub const PANEL_HEADER: [&str; 8] = [
    "unit_id",
    "month",
    "y_rx",
    "y_psy",
    "y_gp",
    "group",
    "event_time",
    "age_at_first_birth",
];

fn check_header(found: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::data(format!(
            "{what}: expected header '{}', found '{}'",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: u64) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::data(format!("line {line}: cannot parse {what} from '{s}'")))
}

fn parse_opt<T: std::str::FromStr>(s: &str, what: &str, line: u64) -> Result<Option<T>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(s, what, line).map(Some)
    }
}

fn parse_bool(s: &str, what: &str, line: u64) -> Result<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        other => Err(Error::data(format!("line {line}: {what} must be 0/1, found '{other}'"))),
    }
}

pub fn read_claims<R: Read>(reader: R) -> Result<Vec<ClaimRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?, &CLAIMS_HEADER, "claims.csv")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let claim = ClaimRecord {
            unit_id: rec[0].trim().to_string(),
            month: parse_field(&rec[1], "calendar_month", line)?,
            kind: ClaimKind::parse(&rec[2])?,
            n_packages: parse_opt(&rec[3], "n_packages", line)?,
            pills_per_package: parse_opt(&rec[4], "pills_per_package", line)?,
        };
        claim.validate()?;
        out.push(claim);
    }
    Ok(out)
}

pub fn write_claims<W: Write>(writer: W, claims: &[ClaimRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CLAIMS_HEADER)?;
    for c in claims {
        let np = c.n_packages.map(|v| v.to_string()).unwrap_or_default();
        let pp = c.pills_per_package.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            c.unit_id.as_str(),
            &c.month.to_string(),
            c.kind.as_str(),
            &np,
            &pp,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_units<R: Read>(reader: R) -> Result<Vec<UnitMeta>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    check_header(&header, &UNITS_HEADER, "units.csv")?;
    let with_enrollment = header.len() >= 8
        && header.get(6).map(str::trim) == Some(ENROLLMENT_COLUMNS[0])
        && header.get(7).map(str::trim) == Some(ENROLLMENT_COLUMNS[1]);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let enrollment = if with_enrollment {
            match (
                parse_opt::<i32>(&rec[6], "enrolled_from", line)?,
                parse_opt::<i32>(&rec[7], "enrolled_to", line)?,
            ) {
                (Some(lo), Some(hi)) => Some(MonthRange { lo, hi }),
                (None, None) => None,
                _ => {
                    return Err(Error::data(format!(
                        "line {line}: enrollment needs both bounds"
                    )))
                }
            }
        } else {
            None
        };
        out.push(UnitMeta {
            unit_id: rec[0].trim().to_string(),
            birth_year: parse_field(&rec[1], "birth_year", line)?,
            first_child_month: parse_opt(&rec[2], "first_child_month", line)?,
            employed: parse_bool(&rec[3], "employed", line)?,
            subsidy: parse_bool(&rec[4], "subsidy", line)?,
            cesarean: parse_bool(&rec[5], "cesarean", line)?,
            enrollment,
            placebo: None,
        });
    }
    Ok(out)
}

pub fn write_units<W: Write>(writer: W, units: &[UnitMeta]) -> Result<()> {
    let with_enrollment = units.iter().any(|u| u.enrollment.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = UNITS_HEADER.to_vec();
    if with_enrollment {
        header.extend(ENROLLMENT_COLUMNS);
    }
    w.write_record(&header)?;
    let b = |v: bool| if v { "1" } else { "0" };
    for u in units {
        let mut rec = vec![
            u.unit_id.clone(),
            u.birth_year.to_string(),
            u.first_child_month.map(|m| m.to_string()).unwrap_or_default(),
            b(u.employed).into(),
            b(u.subsidy).into(),
            b(u.cesarean).into(),
        ];
        if with_enrollment {
            rec.push(u.enrollment.map(|e| e.lo.to_string()).unwrap_or_default());
            rec.push(u.enrollment.map(|e| e.hi.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format export. Never-treated units carry `inf` as group and an empty event time.
pub fn write_panel<W: Write>(writer: W, panel: &Panel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_HEADER)?;
    for o in &panel.observations {
        let id = &panel.units[o.unit as usize].unit_id;
        let group = o.group.month().map_or_else(|| "inf".to_string(), |g| g.to_string());
        let et = o.event_time.map(|t| t.to_string()).unwrap_or_default();
        let age = o.age_at_first_birth.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([
            id.as_str(),
            &o.month.to_string(),
            &o.y_rx.to_string(),
            &o.y_psy.to_string(),
            &o.y_gp.to_string(),
            &group,
            &et,
            &age,
        ])?;
    }
    w.flush()?;
    Ok(())
}
