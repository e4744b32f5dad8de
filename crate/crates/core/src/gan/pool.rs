use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::Tensor;

/// History of generated images shown to a discriminator. Until full, every
/// query image is stored and returned; afterwards each image is, with
/// probability 1/2, swapped for a random stored one.
#[derive(Clone, Debug)]
pub struct ImagePool {
    capacity: usize,
    items: Vec<Vec<f64>>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> Self {
        ImagePool {
            capacity,
            items: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn query(&mut self, batch: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
        if self.capacity == 0 {
            return batch.clone();
        }
        let mut out = batch.clone();
        for i in 0..batch.batch() {
            let img = batch.item(i);
            if self.items.len() < self.capacity {
                self.items.push(img.to_vec());
            } else if rng.gen_bool(0.5) {
                let j = rng.gen_range(0..self.capacity);
                let old = std::mem::replace(&mut self.items[j], img.to_vec());
                out.item_mut(i).copy_from_slice(&old);
            }
        }
        out
    }
}
