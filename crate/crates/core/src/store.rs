//! Per-class bounded FIFO queues of latent embeddings.

use std::collections::VecDeque;

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_CAPACITY: usize = 1000;

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    queues: Vec<VecDeque<Vec<f64>>>,
    capacity: usize,
    dim: usize,
}

impl EmbeddingStore {
    pub fn new(classes: usize, dim: usize, capacity: usize) -> Result<Self> {
        if classes == 0 || dim == 0 || capacity == 0 {
            return Err(Error::input(
                "embedding store needs classes, dim and capacity of at least 1",
            ));
        }
        Ok(Self {
            queues: (0..classes).map(|_| VecDeque::with_capacity(capacity)).collect(),
            capacity,
            dim,
        })
    }

    pub fn classes(&self) -> usize {
        self.queues.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self, class_id: usize) -> usize {
        self.queues.get(class_id).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    pub fn queue(&self, class_id: usize) -> Option<&VecDeque<Vec<f64>>> {
        self.queues.get(class_id)
    }

    /// Appends `embedding` to its class queue, evicting the oldest entry of
    /// that class when the queue is full.
    pub fn push(&mut self, class_id: usize, embedding: &[f64]) -> Result<()> {
        check_dim(self.dim, embedding.len())?;
        let classes = self.queues.len();
        let queue = self.queues.get_mut(class_id).ok_or(Error::InvalidClass {
            class: class_id,
            classes,
        })?;
        if queue.len() == self.capacity {
            queue.pop_front();
        }
        queue.push_back(embedding.to_vec());
        Ok(())
    }

    /// True iff every class queue holds at least `min_per_class` embeddings.
    pub fn ready(&self, min_per_class: usize) -> bool {
        self.queues.iter().all(|q| q.len() >= min_per_class)
    }

    /// Concatenated contents (class by class, oldest first) with labels.
    pub fn snapshot(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let total = self.queues.iter().map(VecDeque::len).sum();
        let mut embeddings = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(total);
        for (k, q) in self.queues.iter().enumerate() {
            embeddings.extend(q.iter().cloned());
            labels.extend(std::iter::repeat_n(k, q.len()));
        }
        (embeddings, labels)
    }
}
