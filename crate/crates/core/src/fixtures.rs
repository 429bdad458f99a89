//! Synthetic datasets shaped like the two effort datasets, generated from a
//! fixed seed. They are not the real data: they exist so the pipelines, the
//! CLI and the tests can run end to end without licensed or unavailable
//! files.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng;

/// Schema text for the raw Desharnais layout (PROMISE header spelling).
pub const DESHARNAIS_SCHEMA: &str = "\
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
Language = categorical
target = Effort
";

/// Schema text for an ISBSG-shaped extract.
pub const ISBSG_SCHEMA: &str = "\
ProjectID = numeric
DataQualityRating = categorical
AFP = numeric
input_count = numeric
output_count = numeric
enquiry_count = numeric
file_count = numeric
interface_count = numeric
add_count = numeric
delete_count = numeric
changed_count = numeric
Effort = numeric
target = Effort
";

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Raw Desharnais-shaped CSV with `n` projects. Effort follows a log-linear
/// law in adjusted points with a language shift, plus lognormal noise; a
/// few cells are missing (`?`) so row dropping is exercised.
pub fn desharnais_csv(n: usize, seed: u64) -> String {
    let mut r = rng::stream(seed, "fixture-desharnais", 0);
    let mut s = String::from(
        "Project,TeamExp,ManagerExp,YearEnd,Length,Effort,Transactions,Entities,PointsAdjust,Envergure,PointsNonAjust,Language\n",
    );
    for i in 0..n {
        let language =
            1 + (r.random_range(0..10u32) >= 6) as u32 + (r.random_range(0..10u32) >= 8) as u32;
        let transactions = r.random_range(10..400u32) as f64;
        let entities = r.random_range(5..300u32) as f64;
        let raw_points = transactions + entities;
        let envergure = r.random_range(5..52u32) as f64;
        let points = (raw_points * (0.65 + 0.01 * envergure)).round();
        let team = r.random_range(0..5u32) as f64;
        let manager = r.random_range(0..8u32) as f64;
        let shift = match language {
            1 => 1.36,
            2 => 1.34,
            _ => 0.0,
        };
        let effort = (1.69 + 0.97 * f64::ln(points) + shift + 0.35 * normal(&mut r))
            .exp()
            .round()
            .max(1.0);
        let team = if i % 29 == 7 {
            "?".to_string()
        } else {
            team.to_string()
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            team,
            manager,
            85 + r.random_range(0..5u32),
            r.random_range(1..40u32),
            effort,
            transactions,
            entities,
            points,
            envergure,
            raw_points,
            language
        ));
    }
    s
}

/// ISBSG-shaped CSV with `n` projects, roughly a quarter of them rated below
/// "A".
pub fn isbsg_csv(n: usize, seed: u64) -> String {
    let mut r = rng::stream(seed, "fixture-isbsg", 0);
    let mut s = String::from(
        "ProjectID,DataQualityRating,AFP,input_count,output_count,enquiry_count,file_count,interface_count,add_count,delete_count,changed_count,Effort\n",
    );
    for i in 0..n {
        let rating = ["A", "A", "A", "B"][r.random_range(0..4usize)];
        let counts: Vec<u32> = (0..5).map(|_| r.random_range(1..120u32)).collect();
        let afp: u32 = counts.iter().sum();
        let add = r.random_range(0..=afp);
        let changed = r.random_range(0..=afp - add);
        let delete = afp - add - changed;
        let effort =
            (5.94 + 0.31 * f64::ln(afp as f64) + 0.001 * counts[2] as f64 + 0.6 * normal(&mut r))
                .exp()
                .round()
                .max(1.0);
        s.push_str(&format!(
            "{},{rating},{afp},{},{},{},{},{},{add},{delete},{changed},{effort}\n",
            1000 + i,
            counts[0],
            counts[1],
            counts[2],
            counts[3],
            counts[4]
        ));
    }
    s
}
