use std::fmt;

use energyfem::mesh::Mesh;

/// One measured-vs-expected comparison.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: format!("< {limit:e}"),
            pass: measured < limit,
        }
    }

    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: format!("<= {limit}"),
            pass: measured <= limit,
        }
    }

    pub fn at_least(name: &str, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: format!(">= {limit}"),
            pass: measured >= limit,
        }
    }

    pub fn above(name: &str, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: format!("> {limit:e}"),
            pass: measured > limit,
        }
    }

    pub fn within(name: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            expected: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&measured),
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            measured: ok as u8 as f64,
            expected: "1".into(),
            pass: ok,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {}: measured {:.6e}, expected {}",
            self.name, self.measured, self.expected
        )
    }
}

/// Nodal fields on a mesh, written to CSV/VTK on request.
#[derive(Clone, Debug)]
pub struct Solution {
    pub mesh: Mesh,
    pub fields: Vec<(String, usize, Vec<f64>)>,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub example: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub solution: Option<Solution>,
}

impl Report {
    pub fn new(example: &str) -> Self {
        Report {
            example: example.into(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
        if other.solution.is_some() {
            self.solution = other.solution;
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.example)?;
        for n in &self.notes {
            writeln!(f, "  {n}")?;
        }
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}
