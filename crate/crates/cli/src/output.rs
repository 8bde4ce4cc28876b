//! CSV and JSON writers. Numbers use Rust's shortest round-trip formatting,
//! so identical inputs give byte-identical files. Every CSV row starts with
//! the config hash and the unit convention.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::settings::Settings;
use crate::Result;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table<'a> {
    writer: csv::Writer<BufWriter<File>>,
    settings: &'a Settings,
}

impl<'a> Table<'a> {
    pub fn create(dir: &Path, name: &str, settings: &'a Settings, columns: &[&str]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?));
        let mut head = vec!["config_hash", "units"];
        head.extend_from_slice(columns);
        writer.write_record(&head)?;
        Ok(Table { writer, settings })
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let mut rec = vec![self.settings.hash.clone(), self.settings.units().to_string()];
        rec.extend(fields);
        self.writer.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}
