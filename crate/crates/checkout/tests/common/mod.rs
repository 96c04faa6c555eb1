#![allow(dead_code)]

use std::sync::Arc;

use arc_checkout::{CheckoutService, Classifier, ClassifyError, ServiceOptions};
use arc_core::dataset::{Catalog, CatalogItem};
use arc_core::Raster;

/// Reads its answer from the first pixel: red 0 means no object, red 1 a
/// uniform distribution, otherwise item `green % k` with probability red/255.
pub struct PixelClassifier {
    pub k: usize,
}

impl Classifier for PixelClassifier {
    fn classes(&self) -> usize {
        self.k
    }

    fn classify(&self, frame: &Raster) -> Result<Vec<f64>, ClassifyError> {
        let p = frame.pixel(0, 0);
        match p[0] {
            0 => Err(ClassifyError::NoObject("empty belt".into())),
            1 => Ok(vec![1.0 / self.k as f64; self.k]),
            r => {
                let top = r as f64 / 255.0;
                let rest = (1.0 - top) / (self.k - 1) as f64;
                let mut probs = vec![rest; self.k];
                probs[p[1] as usize % self.k] = top;
                Ok(probs)
            }
        }
    }
}

pub fn frame(red: u8, green: u8) -> Vec<u8> {
    Raster::new(2, 2, 3, [red, green, 0].repeat(4))
        .unwrap()
        .encode_png()
        .unwrap()
}

pub fn confident(item: usize) -> Vec<u8> {
    frame(250, item as u8)
}

pub fn doubtful(item: usize) -> Vec<u8> {
    frame(100, item as u8)
}

pub fn catalog() -> Catalog {
    let prices = [1250, 330, 99, 4500, 0, 725];
    Catalog::new(
        "USD",
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| CatalogItem {
                id: i,
                dir: format!("item{i}"),
                name: format!("Item {i}"),
                unit_price: p,
            })
            .collect(),
    )
    .unwrap()
}

pub fn service(opts: ServiceOptions) -> CheckoutService {
    CheckoutService::new(catalog(), Arc::new(PixelClassifier { k: 6 }), opts).unwrap()
}
