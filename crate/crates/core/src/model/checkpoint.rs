use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Model};
use crate::error::{Error, Result};
use crate::numcore::ParamSet;

const FORMAT: &str = "relattn-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    arch: Architecture,
    params: ParamSet,
}

impl Model {
    /// Writes a single self-describing JSON file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let env = Envelope {
            format: FORMAT.into(),
            version: VERSION,
            arch: self.arch.clone(),
            params: self.params.clone(),
        };
        serde_json::to_writer(&mut w, &env)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let env: Envelope = serde_json::from_reader(BufReader::new(file))?;
        if env.format != FORMAT {
            return Err(Error::Config(format!(
                "{} is not a checkpoint (format tag {:?})",
                path.display(),
                env.format
            )));
        }
        if env.version != VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {VERSION})",
                env.version
            )));
        }
        let model = Model {
            arch: env.arch,
            params: env.params,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Confirms every tensor matches the recorded dimensions and vocabularies.
    pub fn check_shapes(&self) -> Result<()> {
        let a = &self.arch;
        let hp = &a.hp;
        let ids = &a.ids;
        let mut expect = vec![
            (ids.word, a.vocabs.words.len(), hp.word_dim),
            (ids.pos, a.vocabs.pos.len(), hp.pos_dim),
            (ids.ner, a.vocabs.ner.len(), hp.ner_dim),
            (ids.position, hp.position_rows(), hp.position_dim),
            (ids.distance, hp.distance_rows(), hp.distance_dim),
            (ids.types, a.vocabs.types.len(), hp.type_dim),
            (ids.out_w, hp.hidden, a.vocabs.labels.len()),
            (ids.out_b, 1, a.vocabs.labels.len()),
        ];
        if let Some(e) = ids.extra_word {
            expect.push((e, a.vocabs.words.len(), hp.extra_word_dim));
        }
        for (id, r, c) in expect {
            if id.0 >= self.params.len() {
                return Err(Error::Config(format!("checkpoint lacks parameter #{}", id.0)));
            }
            let got = self.params.get(id).shape();
            if got != (r, c) {
                return Err(Error::Config(format!(
                    "parameter {} is {}x{}, vocabularies and dimensions require {r}x{c}",
                    self.params.name(id),
                    got.0,
                    got.1
                )));
            }
        }
        Ok(())
    }
}
