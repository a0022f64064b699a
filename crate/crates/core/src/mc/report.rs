use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub status: Status,
    pub name: String,
    pub detail: String,
}

/// Ordered list of verification outcomes, rendered one line per check.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub lines: Vec<CheckLine>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        let status = if passed { Status::Pass } else { Status::Fail };
        self.lines.push(CheckLine { status, name: name.into(), detail: detail.into() });
    }

    pub fn info(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.lines.push(CheckLine { status: Status::Info, name: name.into(), detail: detail.into() });
    }

    pub fn extend(&mut self, other: Report) {
        self.lines.extend(other.lines);
    }

    pub fn has_failures(&self) -> bool {
        self.lines.iter().any(|l| l.status == Status::Fail)
    }

    pub fn find(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {}: {}", l.status, l.name, l.detail)?;
        }
        Ok(())
    }
}
