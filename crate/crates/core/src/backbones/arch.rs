//! Layer tables and forward passes for the registry architectures.
//!
//! Unit names follow the torchvision module paths so that exported
//! torchvision state dicts load without renaming.

use candle_core::Tensor;

use super::layers::{avg_pool_3x3_same, cat_channels, max_pool, ConvDef, ConvUnit};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Arch {
    /// Plain conv stack; `pool_after[i]` adds a 2×2 max pool after unit `i`.
    Sequential { pool_after: Vec<bool> },
    InceptionV3,
}

pub(crate) struct ArchDef {
    pub arch: Arch,
    pub convs: Vec<ConvDef>,
    pub feature_channels: usize,
    pub feature_size: (usize, usize),
}

/// Offline test backbone: four stride-2 conv + batch norm + ReLU units,
/// 3 → 4 → 4 → 8 → 8 channels.
pub(crate) fn tiny(kernel: usize) -> ArchDef {
    let channels = [3, 4, 4, 8, 8];
    let convs = (0..4)
        .map(|i| ConvDef::new(format!("features.{i}"), channels[i], channels[i + 1], kernel).stride(2).pad(kernel / 2).with_bn())
        .collect();
    ArchDef { arch: Arch::Sequential { pool_after: vec![false; 4] }, convs, feature_channels: 8, feature_size: (14, 14) }
}

pub(crate) fn vgg16() -> ArchDef {
    // Configuration "D": blocks of 2, 2, 3, 3, 3 convs, max pool after each.
    let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
    let mut convs = Vec::new();
    let mut pool_after = Vec::new();
    let mut cin = 3;
    let mut module_idx = 0;
    for (n, cout) in blocks {
        for j in 0..n {
            convs.push(ConvDef::new(format!("features.{module_idx}"), cin, cout, 3).pad(1));
            pool_after.push(j + 1 == n);
            cin = cout;
            // conv, relu
            module_idx += 2;
        }
        // max pool
        module_idx += 1;
    }
    ArchDef { arch: Arch::Sequential { pool_after }, convs, feature_channels: 512, feature_size: (7, 7) }
}

fn basic(name: String, cin: usize, cout: usize, k: usize) -> ConvDef {
    ConvDef::new(name, cin, cout, k).with_bn()
}

pub(crate) fn inception_v3() -> ArchDef {
    let mut c = Vec::new();
    c.push(basic("Conv2d_1a_3x3".into(), 3, 32, 3).stride(2));
    c.push(basic("Conv2d_2a_3x3".into(), 32, 32, 3));
    c.push(basic("Conv2d_2b_3x3".into(), 32, 64, 3).pad(1));
    c.push(basic("Conv2d_3b_1x1".into(), 64, 80, 1));
    c.push(basic("Conv2d_4a_3x3".into(), 80, 192, 3));
    inception_a(&mut c, "Mixed_5b", 192, 32);
    inception_a(&mut c, "Mixed_5c", 256, 64);
    inception_a(&mut c, "Mixed_5d", 288, 64);
    inception_b(&mut c, "Mixed_6a", 288);
    inception_c(&mut c, "Mixed_6b", 768, 128);
    inception_c(&mut c, "Mixed_6c", 768, 160);
    inception_c(&mut c, "Mixed_6d", 768, 160);
    inception_c(&mut c, "Mixed_6e", 768, 192);
    inception_d(&mut c, "Mixed_7a", 768);
    inception_e(&mut c, "Mixed_7b", 1280);
    inception_e(&mut c, "Mixed_7c", 2048);
    ArchDef { arch: Arch::InceptionV3, convs: c, feature_channels: 2048, feature_size: (5, 5) }
}

fn inception_a(c: &mut Vec<ConvDef>, m: &str, cin: usize, pool_features: usize) {
    c.push(basic(format!("{m}.branch1x1"), cin, 64, 1));
    c.push(basic(format!("{m}.branch5x5_1"), cin, 48, 1));
    c.push(basic(format!("{m}.branch5x5_2"), 48, 64, 5).pad(2));
    c.push(basic(format!("{m}.branch3x3dbl_1"), cin, 64, 1));
    c.push(basic(format!("{m}.branch3x3dbl_2"), 64, 96, 3).pad(1));
    c.push(basic(format!("{m}.branch3x3dbl_3"), 96, 96, 3).pad(1));
    c.push(basic(format!("{m}.branch_pool"), cin, pool_features, 1));
}

fn inception_b(c: &mut Vec<ConvDef>, m: &str, cin: usize) {
    c.push(basic(format!("{m}.branch3x3"), cin, 384, 3).stride(2));
    c.push(basic(format!("{m}.branch3x3dbl_1"), cin, 64, 1));
    c.push(basic(format!("{m}.branch3x3dbl_2"), 64, 96, 3).pad(1));
    c.push(basic(format!("{m}.branch3x3dbl_3"), 96, 96, 3).stride(2));
}

fn inception_c(c: &mut Vec<ConvDef>, m: &str, cin: usize, c7: usize) {
    c.push(basic(format!("{m}.branch1x1"), cin, 192, 1));
    c.push(basic(format!("{m}.branch7x7_1"), cin, c7, 1));
    c.push(basic(format!("{m}.branch7x7_2"), c7, c7, 1).kernel2(1, 7).pad2(0, 3));
    c.push(basic(format!("{m}.branch7x7_3"), c7, 192, 1).kernel2(7, 1).pad2(3, 0));
    c.push(basic(format!("{m}.branch7x7dbl_1"), cin, c7, 1));
    c.push(basic(format!("{m}.branch7x7dbl_2"), c7, c7, 1).kernel2(7, 1).pad2(3, 0));
    c.push(basic(format!("{m}.branch7x7dbl_3"), c7, c7, 1).kernel2(1, 7).pad2(0, 3));
    c.push(basic(format!("{m}.branch7x7dbl_4"), c7, c7, 1).kernel2(7, 1).pad2(3, 0));
    c.push(basic(format!("{m}.branch7x7dbl_5"), c7, 192, 1).kernel2(1, 7).pad2(0, 3));
    c.push(basic(format!("{m}.branch_pool"), cin, 192, 1));
}

fn inception_d(c: &mut Vec<ConvDef>, m: &str, cin: usize) {
    c.push(basic(format!("{m}.branch3x3_1"), cin, 192, 1));
    c.push(basic(format!("{m}.branch3x3_2"), 192, 320, 3).stride(2));
    c.push(basic(format!("{m}.branch7x7x3_1"), cin, 192, 1));
    c.push(basic(format!("{m}.branch7x7x3_2"), 192, 192, 1).kernel2(1, 7).pad2(0, 3));
    c.push(basic(format!("{m}.branch7x7x3_3"), 192, 192, 1).kernel2(7, 1).pad2(3, 0));
    c.push(basic(format!("{m}.branch7x7x3_4"), 192, 192, 3).stride(2));
}

fn inception_e(c: &mut Vec<ConvDef>, m: &str, cin: usize) {
    c.push(basic(format!("{m}.branch1x1"), cin, 320, 1));
    c.push(basic(format!("{m}.branch3x3_1"), cin, 384, 1));
    c.push(basic(format!("{m}.branch3x3_2a"), 384, 384, 1).kernel2(1, 3).pad2(0, 1));
    c.push(basic(format!("{m}.branch3x3_2b"), 384, 384, 1).kernel2(3, 1).pad2(1, 0));
    c.push(basic(format!("{m}.branch3x3dbl_1"), cin, 448, 1));
    c.push(basic(format!("{m}.branch3x3dbl_2"), 448, 384, 3).pad(1));
    c.push(basic(format!("{m}.branch3x3dbl_3a"), 384, 384, 1).kernel2(1, 3).pad2(0, 1));
    c.push(basic(format!("{m}.branch3x3dbl_3b"), 384, 384, 1).kernel2(3, 1).pad2(1, 0));
    c.push(basic(format!("{m}.branch_pool"), cin, 192, 1));
}

/// Walks the units in definition order; each block consumes its convs in the
/// same order they were pushed above.
struct Cursor<'a> {
    units: &'a [ConvUnit],
    next: usize,
    train: bool,
}

impl Cursor<'_> {
    fn conv(&mut self, x: &Tensor) -> Result<Tensor> {
        let unit = &self.units[self.next];
        self.next += 1;
        unit.forward(x, self.train)
    }

    fn chain(&mut self, x: &Tensor, n: usize) -> Result<Tensor> {
        let mut y = self.conv(x)?;
        for _ in 1..n {
            y = self.conv(&y)?;
        }
        Ok(y)
    }

    fn block_a(&mut self, x: &Tensor) -> Result<Tensor> {
        let b1 = self.conv(x)?;
        let b5 = self.chain(x, 2)?;
        let b3 = self.chain(x, 3)?;
        let bp = self.conv(&avg_pool_3x3_same(x)?)?;
        cat_channels(&[b1, b5, b3, bp])
    }

    fn block_b(&mut self, x: &Tensor) -> Result<Tensor> {
        let b3 = self.conv(x)?;
        let bd = self.chain(x, 3)?;
        let bp = max_pool(x, 3, 2)?;
        cat_channels(&[b3, bd, bp])
    }

    fn block_c(&mut self, x: &Tensor) -> Result<Tensor> {
        let b1 = self.conv(x)?;
        let b7 = self.chain(x, 3)?;
        let bd = self.chain(x, 5)?;
        let bp = self.conv(&avg_pool_3x3_same(x)?)?;
        cat_channels(&[b1, b7, bd, bp])
    }

    fn block_d(&mut self, x: &Tensor) -> Result<Tensor> {
        let b3 = self.chain(x, 2)?;
        let b7 = self.chain(x, 4)?;
        let bp = max_pool(x, 3, 2)?;
        cat_channels(&[b3, b7, bp])
    }

    fn block_e(&mut self, x: &Tensor) -> Result<Tensor> {
        let b1 = self.conv(x)?;
        let s = self.conv(x)?;
        let b3 = cat_channels(&[self.conv(&s)?, self.conv(&s)?])?;
        let d = self.chain(x, 2)?;
        let bd = cat_channels(&[self.conv(&d)?, self.conv(&d)?])?;
        let bp = self.conv(&avg_pool_3x3_same(x)?)?;
        cat_channels(&[b1, b3, bd, bp])
    }
}

pub(crate) fn forward(arch: &Arch, units: &[ConvUnit], x: &Tensor, train: bool) -> Result<Tensor> {
    match arch {
        Arch::Sequential { pool_after } => {
            let mut y = x.clone();
            for (unit, &pool) in units.iter().zip(pool_after) {
                y = unit.forward(&y, train)?;
                if pool {
                    y = max_pool(&y, 2, 2)?;
                }
            }
            Ok(y)
        }
        Arch::InceptionV3 => {
            let mut cur = Cursor { units, next: 0, train };
            let mut y = cur.chain(x, 3)?;
            y = max_pool(&y, 3, 2)?;
            y = cur.chain(&y, 2)?;
            y = max_pool(&y, 3, 2)?;
            for _ in 0..3 {
                y = cur.block_a(&y)?;
            }
            y = cur.block_b(&y)?;
            for _ in 0..4 {
                y = cur.block_c(&y)?;
            }
            y = cur.block_d(&y)?;
            for _ in 0..2 {
                y = cur.block_e(&y)?;
            }
            debug_assert_eq!(cur.next, units.len(), "inception forward must consume every unit");
            Ok(y)
        }
    }
}
