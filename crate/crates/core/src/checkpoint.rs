//! Versioned text checkpoints of a run's networks.
//!
//! ```text
//! egan-checkpoint 1
//! step <n>
//! generators <count>
//! <network block> × count
//! discriminator
//! <network block>
//! ```
//!
//! A network block lists `input_dim`, `hidden`, `output` and then one
//! `tensor <shape>` header per weight or bias followed by its rows. Values are
//! written in shortest round-trip form, so a reload is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::Network;

pub const FORMAT_TAG: &str = "egan-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Completed steps when the snapshot was taken.
    pub step: u64,
    pub generators: Vec<Network>,
    pub discriminator: Network,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG} {FORMAT_VERSION}\nstep {}\ngenerators {}\n",
            self.step,
            self.generators.len()
        );
        for g in &self.generators {
            g.write_text(&mut out);
        }
        out.push_str("discriminator\n");
        self.discriminator.write_text(&mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<String> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Data(format!("checkpoint ends before `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                None if line == key => Ok(String::new()),
                _ => Err(Error::Data(format!(
                    "line {}: expected `{key}`, found `{line}`",
                    n + 1
                ))),
            }
        };
        let version = header(FORMAT_TAG)?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Data(format!("unsupported checkpoint version `{version}`")));
        }
        let step = header("step")?
            .parse()
            .map_err(|_| Error::Data("bad step count".into()))?;
        let count: usize = header("generators")?
            .parse()
            .map_err(|_| Error::Data("bad generator count".into()))?;
        let mut generators = Vec::with_capacity(count);
        for _ in 0..count {
            generators.push(Network::read_text(&mut lines)?);
        }
        match lines.next() {
            Some((_, "discriminator")) => {}
            Some((n, line)) => {
                return Err(Error::Data(format!(
                    "line {}: expected `discriminator`, found `{line}`",
                    n + 1
                )))
            }
            None => return Err(Error::Data("checkpoint ends before `discriminator`".into())),
        }
        let discriminator = Network::read_text(&mut lines)?;
        if let Some((n, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(Error::Data(format!("line {}: trailing content `{line}`", n + 1)));
        }
        Ok(Checkpoint { step, generators, discriminator })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Checkpoint::from_text(&text)
    }
}
