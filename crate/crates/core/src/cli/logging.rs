//! Process-wide logger that writes timestamped lines to the current run log.
//! Warnings are echoed to stderr.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{Level, LevelFilter, Log, Metadata, Record};

use crate::error::{Error, Result};

struct RunLog {
    file: Mutex<Option<File>>,
}

static LOGGER: RunLog = RunLog { file: Mutex::new(None) };

impl Log for RunLog {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        if record.level() == Level::Warn {
            eprintln!("{}: {}", record.level(), record.args());
        }
        let t = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let mut guard = self.file.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(f) = guard.as_mut() {
            let _ = writeln!(
                f,
                "{}.{:03} {:<5} {}",
                t.as_secs(),
                t.subsec_millis(),
                record.level(),
                record.args()
            );
        }
    }

    fn flush(&self) {
        if let Some(f) = self.file.lock().unwrap_or_else(|e| e.into_inner()).as_mut() {
            let _ = f.flush();
        }
    }
}

/// Directs log output to `path`, truncating it.
pub fn open(path: &Path) -> Result<()> {
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    *LOGGER.file.lock().unwrap_or_else(|e| e.into_inner()) = Some(f);
    Ok(())
}

pub fn close() {
    LOGGER.flush();
    *LOGGER.file.lock().unwrap_or_else(|e| e.into_inner()) = None;
}
