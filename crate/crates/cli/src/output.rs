use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use leontief_core::fmt::g12;

pub fn open(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// CSV writer with an optional leading `# ...` metadata line.
pub struct Table {
    inner: csv::Writer<Box<dyn Write>>,
}

impl Table {
    pub fn new(path: Option<&Path>, comment: Option<&str>, header: &[&str]) -> io::Result<Self> {
        let mut raw = open(path)?;
        if let Some(c) = comment {
            writeln!(raw, "# {c}")?;
        }
        let mut inner = csv::Writer::from_writer(raw);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> csv::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn num(x: f64) -> String {
    g12(x)
}
