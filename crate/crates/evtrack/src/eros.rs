//! EROS: exponentially-decayed event surface.
//!
//! Each incoming event sets its pixel to 1.0 and multiplies every other pixel
//! in the surrounding k x k window by lambda, giving a velocity-independent
//! edge appearance.

use crate::types::Event;

#[derive(Debug, Clone)]
pub struct ErosSurface {
    width: usize,
    height: usize,
    lambda: f64,
    k: usize,
    values: Vec<f64>,
}

impl ErosSurface {
    pub fn new(width: u32, height: u32, k: usize, lambda: f64) -> Self {
        assert!(k % 2 == 1, "neighborhood side must be odd");
        assert!(lambda > 0.0 && lambda < 1.0);
        Self {
            width: width as usize,
            height: height as usize,
            lambda,
            k,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Apply one event: decay the k x k neighborhood by lambda (center pixel
    /// excluded), then set the center to 1.0. Polarity is ignored.
    pub fn update(&mut self, event: &Event) -> Result<(), OutOfBounds> {
        let (u, v) = (event.x as usize, event.y as usize);
        if u >= self.width || v >= self.height {
            return Err(OutOfBounds { x: event.x, y: event.y });
        }
        let half = (self.k / 2) as isize;
        let x0 = (u as isize - half).max(0) as usize;
        let x1 = (u as isize + half).min(self.width as isize - 1) as usize;
        let y0 = (v as isize - half).max(0) as usize;
        let y1 = (v as isize + half).min(self.height as isize - 1) as usize;
        for y in y0..=y1 {
            let row = y * self.width;
            for x in x0..=x1 {
                if x == u && y == v {
                    continue;
                }
                self.values[row + x] *= self.lambda;
            }
        }
        self.values[v * self.width + u] = 1.0;
        Ok(())
    }

    /// Dense copy of the square region centered at `center` with the given
    /// half extent, zero-padded outside the image. Side length 2*half_extent+1.
    pub fn snapshot_roi(&self, center: (i64, i64), half_extent: usize) -> Vec<f64> {
        let side = 2 * half_extent + 1;
        self.snapshot_rect(
            center.0 - half_extent as i64,
            center.1 - half_extent as i64,
            side,
            side,
        )
    }

    /// Dense copy of an arbitrary rectangle (origin may be negative),
    /// zero-padded outside the image.
    pub fn snapshot_rect(&self, x0: i64, y0: i64, w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for dy in 0..h {
            let y = y0 + dy as i64;
            if y < 0 || y >= self.height as i64 {
                continue;
            }
            for dx in 0..w {
                let x = x0 + dx as i64;
                if x < 0 || x >= self.width as i64 {
                    continue;
                }
                out[dy * w + dx] = self.values[y as usize * self.width + x as usize];
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
#[error("event pixel ({x},{y}) outside EROS surface")]
pub struct OutOfBounds {
    pub x: u32,
    pub y: u32,
}
