//! Named preparation pipelines for the two effort datasets.
//!
//! Public copies of the Desharnais data spell several headers differently
//! (`PointsNonAjust`, `Adjustment`, `Project` vs `id`, ...). Columns are
//! matched on a normalized name against a small alias table and renamed to
//! the canonical spelling below.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{Column, Dataset, Kind, Value};
use crate::error::{Error, Result};

pub const EFFORT: &str = "Effort";

/// Canonical Desharnais predictors kept after preparation, in output order.
pub const DESHARNAIS_PREDICTORS: [&str; 7] = [
    "TeamExp",
    "ManagerExp",
    "Transactions",
    "Entities",
    "PointsAdjust",
    "Envergure",
    "Language",
];
pub const DESHARNAIS_SIZE: &str = "PointsAdjust";
pub const DESHARNAIS_LANGUAGE: &str = "Language";

const DESHARNAIS_ALIASES: [(&str, &[&str]); 8] = [
    ("TeamExp", &["teamexp", "teamexperience"]),
    ("ManagerExp", &["managerexp", "managerexperience"]),
    ("Transactions", &["transactions"]),
    ("Entities", &["entities"]),
    (
        "PointsAdjust",
        &["pointsadjust", "pointsajust", "pointsadjusted"],
    ),
    ("Envergure", &["envergure", "adjustment"]),
    ("Language", &["language"]),
    ("Effort", &["effort"]),
];

/// Columns dropped from Desharnais: identifiers, the second target, and the
/// unadjusted size measure (collinear with PointsAdjust).
const DESHARNAIS_DROPPED: [&[&str]; 4] = [
    &["projectnumber", "project", "id"],
    &["yearend"],
    &["length"],
    &["pointsnonadjust", "pointsnonajust"],
];

/// The nine ISBSG size/count features.
pub const ISBSG_PREDICTORS: [&str; 9] = [
    "AFP",
    "input_count",
    "output_count",
    "enquiry_count",
    "file_count",
    "interface_count",
    "add_count",
    "delete_count",
    "changed_count",
];
pub const ISBSG_SIZE: &str = "AFP";
const ISBSG_RATING: [&str; 3] = ["dataqualityrating", "qualityrating", "rating"];

fn normalize(name: &str) -> String {
    name.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

fn find_alias(ds: &Dataset, aliases: &[&str]) -> Option<String> {
    ds.schema()
        .columns()
        .iter()
        .find(|c| aliases.contains(&normalize(&c.name).as_str()))
        .map(|c| c.name.clone())
}

/// Drops incomplete rows, then the four unused Desharnais columns, and renames
/// the remaining columns to their canonical spelling. `Language` is kept (and
/// if needed converted to) categorical. Idempotent.
pub fn prepare_desharnais(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.drop_incomplete_rows();
    for aliases in DESHARNAIS_DROPPED {
        if let Some(name) = find_alias(&out, aliases) {
            out = out.drop_columns(&[name])?;
        }
    }
    for (canonical, aliases) in DESHARNAIS_ALIASES {
        let found = find_alias(&out, aliases).ok_or_else(|| {
            Error::Schema(format!("Desharnais input lacks a `{canonical}` column"))
        })?;
        out = out.rename_column(&found, canonical)?;
    }
    if out.schema().target() != EFFORT {
        return Err(Error::Schema(format!(
            "Desharnais target must be `{EFFORT}`, schema says `{}`",
            out.schema().target()
        )));
    }
    let extra: Vec<String> = out
        .schema()
        .columns()
        .iter()
        .map(|c| c.name.clone())
        .filter(|n| n != EFFORT && !DESHARNAIS_PREDICTORS.contains(&n.as_str()))
        .collect();
    if !extra.is_empty() {
        return Err(Error::Schema(format!(
            "unexpected Desharnais columns: {extra:?}"
        )));
    }
    out.to_categorical(DESHARNAIS_LANGUAGE)
}

/// Keeps quality-rating "A" rows when a rating column exists, drops incomplete
/// rows and every column other than the nine size/count features and Effort.
pub fn prepare_isbsg(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    if let Some(rating) = find_alias(&out, &ISBSG_RATING) {
        let keep = |r: usize| matches!(out.value(&rating, r), Ok(Value::Cat(l)) if l.eq_ignore_ascii_case("a"));
        out = out.filter_rows(keep);
    }
    for name in ISBSG_PREDICTORS.iter().chain([&EFFORT]) {
        let found = find_alias(&out, &[normalize(name).as_str()])
            .ok_or_else(|| Error::Schema(format!("ISBSG input lacks a `{name}` column")))?;
        out = out.rename_column(&found, name)?;
        if out.schema().kind_of(name) != Some(Kind::Numeric) {
            return Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
                found: "categorical",
            });
        }
    }
    if out.schema().target() != EFFORT {
        return Err(Error::Schema(format!("ISBSG target must be `{EFFORT}`")));
    }
    let drop: Vec<String> = out
        .schema()
        .columns()
        .iter()
        .map(|c| c.name.clone())
        .filter(|n| n != EFFORT && !ISBSG_PREDICTORS.contains(&n.as_str()))
        .collect();
    out = out.drop_columns(&drop)?;
    Ok(out.drop_incomplete_rows())
}

/// A preparation pipeline selectable from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pipeline {
    Desharnais,
    Isbsg,
    /// A comma-separated list of steps: `incomplete`, `drop:<col>`,
    /// `categorical:<col>`. An empty list leaves the data as loaded.
    Custom(Vec<Step>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    DropIncomplete,
    Drop(String),
    Categorical(String),
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "desharnais" => return Ok(Pipeline::Desharnais),
            "isbsg" => return Ok(Pipeline::Isbsg),
            "none" | "" => return Ok(Pipeline::Custom(Vec::new())),
            _ => {}
        }
        let steps = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t.split_once(':') {
                None if t == "incomplete" => Ok(Step::DropIncomplete),
                Some(("drop", c)) => Ok(Step::Drop(c.to_string())),
                Some(("categorical", c)) => Ok(Step::Categorical(c.to_string())),
                _ => Err(Error::invalid_param(format!(
                    "unknown preparation step `{t}`"
                ))),
            })
            .collect::<Result<_>>()?;
        Ok(Pipeline::Custom(steps))
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pipeline::Desharnais => f.write_str("desharnais"),
            Pipeline::Isbsg => f.write_str("isbsg"),
            Pipeline::Custom(steps) if steps.is_empty() => f.write_str("none"),
            Pipeline::Custom(steps) => {
                let parts: Vec<String> = steps
                    .iter()
                    .map(|s| match s {
                        Step::DropIncomplete => "incomplete".to_string(),
                        Step::Drop(c) => format!("drop:{c}"),
                        Step::Categorical(c) => format!("categorical:{c}"),
                    })
                    .collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl Pipeline {
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        match self {
            Pipeline::Desharnais => prepare_desharnais(ds),
            Pipeline::Isbsg => prepare_isbsg(ds),
            Pipeline::Custom(steps) => {
                let mut out = ds.clone();
                for step in steps {
                    out = match step {
                        Step::DropIncomplete => out.drop_incomplete_rows(),
                        Step::Drop(c) => out.drop_columns(&[c])?,
                        Step::Categorical(c) => out.to_categorical(c)?,
                    };
                }
                Ok(out)
            }
        }
    }

    /// Numeric columns the log-linear model fits on the log scale: the target
    /// plus, for the named pipelines, the size measure.
    pub fn log_columns(&self, ds: &Dataset) -> Vec<String> {
        let mut cols = vec![ds.schema().target().to_string()];
        match self {
            Pipeline::Desharnais => cols.push(DESHARNAIS_SIZE.to_string()),
            Pipeline::Isbsg => cols.push(ISBSG_SIZE.to_string()),
            Pipeline::Custom(_) => {}
        }
        cols
    }
}

/// Verifies the effort target is strictly positive, as MRE requires.
pub fn check_positive_target(ds: &Dataset) -> Result<()> {
    let name = ds.schema().target();
    if let Column::Numeric(v) = ds.column(name)? {
        if let Some((row, x)) = v
            .iter()
            .enumerate()
            .find_map(|(i, x)| x.filter(|&x| x <= 0.0).map(|x| (i, x)))
        {
            return Err(Error::invalid_data(format!(
                "target `{name}` must be positive, found {x} at row {row}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_csv, Schema};

    const RAW_SCHEMA: &str = "\
Project = numeric
TeamExp = numeric
ManagerExp = numeric
YearEnd = numeric
Length = numeric
Effort = numeric
Transactions = numeric
Entities = numeric
PointsAdjust = numeric
Envergure = numeric
PointsNonAjust = numeric
Language = numeric
target = Effort
";

    fn raw() -> Dataset {
        let csv = "\
Project,TeamExp,ManagerExp,YearEnd,Length,Effort,Transactions,Entities,PointsAdjust,Envergure,PointsNonAjust,Language
1,1,4,85,12,5000,250,50,300,30,290,1
2,?,2,86,4,5600,200,120,320,33,310,1
3,4,4,85,1,800,40,60,100,18,85,2
4,2,1,87,9,3000,150,70,220,25,215,3
";
        read_csv(csv.as_bytes(), &Schema::parse(RAW_SCHEMA).unwrap()).unwrap()
    }

    #[test]
    fn desharnais_shape() {
        let p = prepare_desharnais(&raw()).unwrap();
        assert_eq!(p.n_rows(), 3);
        let names: Vec<_> = p
            .schema()
            .columns()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(
            names,
            vec![
                "TeamExp",
                "ManagerExp",
                "Effort",
                "Transactions",
                "Entities",
                "PointsAdjust",
                "Envergure",
                "Language"
            ]
        );
        assert_eq!(p.schema().kind_of("Language"), Some(Kind::Categorical));
        assert_eq!(p.target().unwrap(), vec![5000.0, 800.0, 3000.0]);
    }

    #[test]
    fn desharnais_is_idempotent() {
        let p = prepare_desharnais(&raw()).unwrap();
        assert_eq!(prepare_desharnais(&p).unwrap(), p);
    }

    #[test]
    fn desharnais_without_language_fails() {
        let ds = raw().drop_columns(&["Language"]).unwrap();
        assert!(prepare_desharnais(&ds).is_err());
    }

    #[test]
    fn pipeline_parsing() {
        assert_eq!(
            "desharnais".parse::<Pipeline>().unwrap(),
            Pipeline::Desharnais
        );
        let p: Pipeline = "incomplete, drop:Length,categorical:Language"
            .parse()
            .unwrap();
        assert_eq!(
            p,
            Pipeline::Custom(vec![
                Step::DropIncomplete,
                Step::Drop("Length".into()),
                Step::Categorical("Language".into())
            ])
        );
        assert_eq!(p.to_string(), "incomplete,drop:Length,categorical:Language");
        assert!("bogus".parse::<Pipeline>().is_err());
    }

    #[test]
    fn isbsg_filters_rating_and_columns() {
        let schema = Schema::parse(
            "AFP = numeric\ninput_count = numeric\noutput_count = numeric\nenquiry_count = numeric\n\
             file_count = numeric\ninterface_count = numeric\nadd_count = numeric\n\
             delete_count = numeric\nchanged_count = numeric\nRating = categorical\n\
             Team = numeric\nEffort = numeric\ntarget = Effort",
        )
        .unwrap();
        let csv = "AFP,input_count,output_count,enquiry_count,file_count,interface_count,add_count,delete_count,changed_count,Rating,Team,Effort\n\
                   100,1,2,3,4,5,6,7,8,A,3,1000\n\
                   200,1,2,3,4,5,6,7,8,B,3,2000\n\
                   300,1,2,3,4,5,6,7,?,A,3,3000\n\
                   400,1,2,3,4,5,6,7,8,A,3,4000\n";
        let ds = read_csv(csv.as_bytes(), &schema).unwrap();
        let p = prepare_isbsg(&ds).unwrap();
        assert_eq!(p.target().unwrap(), vec![1000.0, 4000.0]);
        assert_eq!(p.schema().columns().len(), 10);
    }
}
