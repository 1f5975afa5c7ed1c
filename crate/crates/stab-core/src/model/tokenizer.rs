//! Feature tokenizer: one d-vector per feature plus the special token.
//!
//! Numeric features go through mixture embeddings; categorical features are
//! table lookups with a dedicated extra row for unseen categories. Slot 0 of
//! the output always holds the special token.

use crate::error::{Result, StabError};
use crate::param::{Param, ParamInit, ParamStore};
use crate::pass::Pass;
use crate::stochastic::{mixture_embed_batch, EmbeddingMixture};
use crate::tensor::TensorId;

use super::Batch;

#[derive(Debug, Clone)]
pub struct FeatureTokenizer {
    pub dim: usize,
    /// Trainable input-independent vector whose terminal representation
    /// feeds the task head.
    pub special_token: Param,
    pub numeric_embeds: Vec<EmbeddingMixture>,
    /// One (cardinality + 1, d) table per categorical feature; the last row
    /// is the unseen-category row.
    pub categorical_tables: Vec<Param>,
}

impl FeatureTokenizer {
    pub fn new(
        init: &mut ParamInit,
        dim: usize,
        mixture_components: usize,
        categorical_cards: &[usize],
        numeric_count: usize,
    ) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        FeatureTokenizer {
            dim,
            special_token: init.uniform("tokenizer.special", &[dim], bound),
            numeric_embeds: (0..numeric_count)
                .map(|i| {
                    EmbeddingMixture::new(init, &format!("tokenizer.num{i}"), mixture_components, dim)
                })
                .collect(),
            categorical_tables: categorical_cards
                .iter()
                .enumerate()
                .map(|(i, &card)| {
                    init.uniform(format!("tokenizer.cat{i}.table"), &[card + 1, dim], bound)
                })
                .collect(),
        }
    }

    /// Tokens produced per row: special + numerics + categoricals.
    pub fn tokens(&self) -> usize {
        1 + self.numeric_embeds.len() + self.categorical_tables.len()
    }

    /// Tokenize a whole batch into (rows, s+1, d).
    pub fn tokenize_batch(&self, pass: &mut Pass, batch: &Batch) -> Result<TensorId> {
        if batch.numeric_cols.len() != self.numeric_embeds.len()
            || batch.cat_cols.len() != self.categorical_tables.len()
        {
            return Err(StabError::Schema(format!(
                "row arity mismatch: batch has {} numeric / {} categorical features, tokenizer expects {} / {}",
                batch.numeric_cols.len(),
                batch.cat_cols.len(),
                self.numeric_embeds.len(),
                self.categorical_tables.len()
            )));
        }
        let rows = batch.rows;
        let d = self.dim;

        let mut pieces = Vec::with_capacity(self.tokens());
        let special = pass.bind(&self.special_token)?;
        let g = &mut pass.graph;
        let ones_col = g.constant(vec![1.0; rows], &[rows, 1])?;
        let special_row = g.reshape(special, &[1, d])?;
        pieces.push(g.matmul(ones_col, special_row)?);

        for (embed, col) in self.numeric_embeds.iter().zip(&batch.numeric_cols) {
            pieces.push(mixture_embed_batch(pass, col, embed)?);
        }
        for (table, col) in self.categorical_tables.iter().zip(&batch.cat_cols) {
            let card_rows = table.shape[0];
            // one-hot lookup; indices beyond the table map to the unseen row
            let mut onehot = vec![0.0; rows * card_rows];
            for (r, &idx) in col.iter().enumerate() {
                onehot[r * card_rows + idx.min(card_rows - 1)] = 1.0;
            }
            let t = pass.bind(table)?;
            let oh = pass.graph.constant(onehot, &[rows, card_rows])?;
            pieces.push(pass.graph.matmul(oh, t)?);
        }

        let flat = pass.graph.concat_lastdim(&pieces)?;
        pass.graph.reshape(flat, &[rows, self.tokens(), d])
    }

    /// Tokenize one row into (s+1, d).
    pub fn tokenize(
        &self,
        pass: &mut Pass,
        numerics: &[f64],
        categoricals: &[usize],
    ) -> Result<TensorId> {
        let batch = Batch::single(numerics, categoricals);
        let out = self.tokenize_batch(pass, &batch)?;
        pass.graph.reshape(out, &[self.tokens(), self.dim])
    }
}

impl ParamStore for FeatureTokenizer {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.special_token];
        for e in &self.numeric_embeds {
            p.extend(e.params());
        }
        p.extend(self.categorical_tables.iter());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.special_token];
        for e in &mut self.numeric_embeds {
            p.extend(e.params_mut());
        }
        p.extend(self.categorical_tables.iter_mut());
        p
    }
}
