use rand::seq::SliceRandom;
use rand::Rng;

use super::image::Image;
use crate::error::{Error, Result};

/// Splits the image into a `grid x grid` tiling and moves the patch at cell
/// `i` (row-major) to cell `permutation[i]`.
pub fn jigsaw(img: &Image, grid: usize, permutation: &[usize]) -> Result<Image> {
    if grid == 0 || img.height() % grid != 0 || img.width() % grid != 0 {
        return Err(Error::input(format!(
            "jigsaw grid {grid} does not divide a {}x{} image",
            img.height(),
            img.width()
        )));
    }
    validate_permutation(permutation, grid * grid)?;
    let (ph, pw) = (img.height() / grid, img.width() / grid);
    let mut out = img.blank_like();
    for (src, &dst) in permutation.iter().enumerate() {
        let (sy, sx) = ((src / grid) * ph, (src % grid) * pw);
        let (dy, dx) = ((dst / grid) * ph, (dst % grid) * pw);
        for r in 0..ph {
            for c in 0..pw {
                out.pixel_mut(dy + r, dx + c)
                    .copy_from_slice(img.pixel(sy + r, sx + c));
            }
        }
    }
    Ok(out)
}

pub fn validate_permutation(permutation: &[usize], n: usize) -> Result<()> {
    if permutation.len() != n {
        return Err(Error::input(format!(
            "permutation has {} entries, expected {n}",
            permutation.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::input(format!("invalid permutation entry {p}")));
        }
    }
    Ok(())
}

pub fn invert_permutation(permutation: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; permutation.len()];
    for (i, &p) in permutation.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Uniform permutation of `0..n` other than the identity (`n ≥ 2`).
pub fn random_non_identity_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::input("a non-identity permutation needs at least 2 elements"));
    }
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().any(|(i, &v)| i != v) {
            return Ok(p);
        }
    }
}
