use crate::data::{FieldKind, PlatformBatch, PlatformSchema};
use crate::nn::{AdamConfig, Embedding, Mlp, MlpTrace, Module, ParamBlock, Tensor};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Local model `M^l_i` of one fairness-insensitive platform.
///
/// Categorical fields are embedded, concatenated with the standardized
/// numeric fields, and passed through a two-layer network.
#[derive(Debug, Clone)]
pub struct LocalEncoder {
    pub schema: PlatformSchema,
    pub embeddings: Vec<Embedding>,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    indices: Vec<Vec<u32>>,
    mlp: MlpTrace,
}

impl LocalEncoder {
    pub fn new(
        name: &str,
        schema: PlatformSchema,
        embed_dim: usize,
        hidden: usize,
        out: usize,
        dropout: f64,
        adam: AdamConfig,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let mut embeddings = Vec::new();
        for f in &schema.fields {
            if let FieldKind::Categorical { vocab } = &f.kind {
                embeddings.push(Embedding::new(
                    format!("{name}.emb.{}", f.name),
                    vocab.len(),
                    embed_dim,
                    adam,
                    rng,
                ));
            }
        }
        let input = embeddings.len() * embed_dim + schema.numeric_count();
        if input == 0 {
            return Err(Error::Config(format!("platform `{name}` has no input fields")));
        }
        let mlp = Mlp::new(name, [input, hidden, out], dropout, adam, rng)?;
        Ok(Self {
            schema,
            embeddings,
            mlp,
        })
    }

    pub fn out_width(&self) -> usize {
        self.mlp.out_width()
    }

    /// Training mode when `rng` is given. Out-of-vocabulary indices are an
    /// error in training and fall back to the reserved unknown row otherwise.
    pub fn forward(
        &self,
        batch: &PlatformBatch,
        rng: Option<&mut StreamRng>,
    ) -> Result<(Tensor, EncoderTrace)> {
        let n_num = self.schema.numeric_count();
        if batch.categorical.len() != self.embeddings.len() || batch.numeric.cols() != n_num {
            return Err(Error::dim(
                "encode_local",
                format!(
                    "batch with {} categorical / {} numeric",
                    batch.categorical.len(),
                    batch.numeric.cols()
                ),
                format!("schema with {} categorical / {n_num} numeric", self.embeddings.len()),
            ));
        }
        let training = rng.is_some();
        let cat_names: Vec<&str> = self.schema.categorical_names().collect();
        let mut indices = Vec::with_capacity(self.embeddings.len());
        let mut parts = Vec::with_capacity(self.embeddings.len() + 1);
        for ((emb, col), name) in self.embeddings.iter().zip(&batch.categorical).zip(&cat_names) {
            if col.len() != batch.numeric.rows() {
                return Err(Error::dim(
                    "encode_local",
                    format!("{} rows in `{name}`", col.len()),
                    format!("{} numeric rows", batch.numeric.rows()),
                ));
            }
            let mut idx = col.clone();
            for v in idx.iter_mut() {
                if *v as usize >= emb.rows() {
                    if training {
                        return Err(Error::Vocabulary {
                            field: (*name).to_string(),
                            value: *v,
                            vocab: emb.rows(),
                        });
                    }
                    *v = 0;
                }
            }
            parts.push(emb.forward(&idx));
            indices.push(idx);
        }
        parts.push(batch.numeric.clone());
        let refs: Vec<&Tensor> = parts.iter().collect();
        let x = Tensor::hcat(&refs)?;
        let (y, mlp) = self.mlp.forward(&x, rng)?;
        Ok((y, EncoderTrace { indices, mlp }))
    }

    pub fn backward(&mut self, trace: &EncoderTrace, dy: &Tensor) -> Result<()> {
        let dx = self.mlp.backward(&trace.mlp, dy)?;
        let mut off = 0;
        for (emb, idx) in self.embeddings.iter_mut().zip(&trace.indices) {
            let w = emb.width();
            emb.backward(idx, &dx.columns(off, off + w));
            off += w;
        }
        Ok(())
    }
}

impl Module for LocalEncoder {
    fn visit(&self, f: &mut dyn FnMut(&ParamBlock)) {
        self.embeddings.iter().for_each(|e| e.visit(f));
        self.mlp.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ParamBlock)) {
        self.embeddings.iter_mut().for_each(|e| e.visit_mut(f));
        self.mlp.visit_mut(f);
    }
}
