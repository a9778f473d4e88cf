//! Built-in service programs an edge server can run.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Workload {
    /// Returns the input unchanged.
    Echo,
    /// Sum of all input bytes as a big-endian u64.
    SumBytes,
    /// Sleeps for the given number of milliseconds, then echoes.
    Sleep(u64),
}

impl Workload {
    pub fn run(&self, data: &[u8]) -> Vec<u8> {
        match self {
            Workload::Echo => data.to_vec(),
            Workload::SumBytes => data.iter().map(|b| u64::from(*b)).sum::<u64>().to_be_bytes().to_vec(),
            Workload::Sleep(ms) => {
                std::thread::sleep(Duration::from_millis(*ms));
                data.to_vec()
            }
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Workload::Echo => f.write_str("echo"),
            Workload::SumBytes => f.write_str("sum-bytes"),
            Workload::Sleep(ms) => write!(f, "sleep({ms})"),
        }
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "echo" => Ok(Workload::Echo),
            "sum-bytes" => Ok(Workload::SumBytes),
            other => other
                .strip_prefix("sleep(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|ms| ms.trim().parse().ok())
                .map(Workload::Sleep)
                .ok_or_else(|| format!("unknown workload `{other}` (expected echo, sum-bytes or sleep(ms))")),
        }
    }
}

impl TryFrom<String> for Workload {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Workload> for String {
    fn from(w: Workload) -> String {
        w.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_run() {
        assert_eq!("echo".parse::<Workload>().unwrap().run(b"hi"), b"hi");
        assert_eq!("sum-bytes".parse::<Workload>().unwrap().run(&[1, 2, 250]), 253u64.to_be_bytes());
        assert_eq!("sleep(0)".parse::<Workload>().unwrap(), Workload::Sleep(0));
        assert!("sleep(x)".parse::<Workload>().is_err());
        assert_eq!(Workload::Sleep(5).to_string().parse::<Workload>().unwrap(), Workload::Sleep(5));
    }
}
