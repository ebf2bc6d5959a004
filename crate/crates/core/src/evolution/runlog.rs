//! Comma-separated step logs, one record per step.

use super::trainer::{BaselineStepLog, EvolutionStepLog};

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

impl EvolutionStepLog {
    /// Header for runs with `n_children` children and `n_disc` discriminator
    /// updates per step.
    pub fn csv_header(n_children: usize, n_disc: usize) -> String {
        let mut cols = vec!["step".to_string()];
        cols.extend((0..n_disc).map(|k| format!("d_objective_{k}")));
        cols.push("survivors".into());
        for c in 0..n_children {
            for field in ["parent", "mutation", "fq", "fd", "total"] {
                cols.push(format!("child{c}_{field}"));
            }
        }
        cols.join(",")
    }

    /// Survivors are child indices separated by `;`, best first.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string()];
        cols.extend(self.disc_objectives.iter().map(f64::to_string));
        cols.push(join(&self.survivors, ";"));
        for c in &self.children {
            cols.push(c.parent.to_string());
            cols.push(c.mutation.to_string());
            cols.push(c.fitness.fq.to_string());
            cols.push(c.fitness.fd.to_string());
            cols.push(c.fitness.total.to_string());
        }
        cols.join(",")
    }
}

impl BaselineStepLog {
    pub fn csv_header(n_disc: usize) -> String {
        let mut cols = vec!["step".to_string()];
        cols.extend((0..n_disc).map(|k| format!("d_objective_{k}")));
        cols.push("mutation".into());
        cols.push("g_loss".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string()];
        cols.extend(self.disc_objectives.iter().map(f64::to_string));
        cols.push(self.mutation.to_string());
        cols.push(self.generator_loss.to_string());
        cols.join(",")
    }
}
