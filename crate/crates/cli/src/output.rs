use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// CSV table: header row, `{:.16e}` numbers, LF line endings.
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            body: String::new(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.header.len(), "row width");
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = self.header.join(",");
        text.push('\n');
        text.push_str(&self.body);
        fs::write(path, text)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// `name_re`, `name_im`.
pub fn complex_columns(name: &str) -> [String; 2] {
    [format!("{name}_re"), format!("{name}_im")]
}
