use serde::{Deserialize, Serialize};

use super::physics::{SystemState, TRACK_LIMIT};

pub const FRAME_WIDTH: usize = 32;
pub const FRAME_HEIGHT: usize = 32;
pub const FRAME_PIXELS: usize = FRAME_WIDTH * FRAME_HEIGHT;

pub const CART_WIDTH: usize = 6;
pub const CART_ROWS: [usize; 2] = [24, 25];
pub const POLE_PIXELS: usize = 12;
/// Row of the first pole pixel, directly above the cart.
pub const POLE_BASE_ROW: usize = 23;

/// Grayscale frame, row-major, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pixels: Vec<f64>,
}

impl Observation {
    pub fn blank() -> Self {
        Self {
            pixels: vec![0.0; FRAME_PIXELS],
        }
    }

    pub fn from_pixels(pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), FRAME_PIXELS);
        Self { pixels }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * FRAME_WIDTH + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * FRAME_WIDTH + col] = v;
    }

    pub fn is_valid(&self) -> bool {
        self.pixels.len() == FRAME_PIXELS && self.pixels.iter().all(|p| (0.0..=1.0).contains(p))
    }

    /// Quantizes to 8-bit intensities for storage.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            pixels: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }
}

/// Screen column of the cart center; `x` is clamped to the track first.
pub fn cart_column(x: f64) -> i64 {
    let x = x.clamp(-TRACK_LIMIT, TRACK_LIMIT);
    ((x + TRACK_LIMIT) / (2.0 * TRACK_LIMIT) * (FRAME_WIDTH as f64 - 1.0)).round() as i64
}

/// Integer pixel coordinates (row, col) of the pole before clipping.
///
/// Steps one pixel along the major axis of the pole direction, so the
/// segment always has exactly `POLE_PIXELS` distinct pixels.
pub fn pole_pixels(center_col: i64, theta: f64) -> [(i64, i64); POLE_PIXELS] {
    let (dc, dr) = (theta.sin(), -theta.cos());
    let major = dc.abs().max(dr.abs());
    let mut out = [(0i64, 0i64); POLE_PIXELS];
    for (j, px) in out.iter_mut().enumerate() {
        let t = j as f64 / major;
        *px = (
            POLE_BASE_ROW as i64 + (t * dr).round() as i64,
            center_col + (t * dc).round() as i64,
        );
    }
    out
}

pub fn cart_pixels(center_col: i64) -> impl Iterator<Item = (i64, i64)> {
    let left = center_col - (CART_WIDTH as i64) / 2;
    CART_ROWS
        .iter()
        .flat_map(move |&r| (left..left + CART_WIDTH as i64).map(move |c| (r as i64, c)))
}

/// Rasterizes a state. Returns the frame and whether `x` had to be clamped.
pub fn render_checked(s: &SystemState) -> (Observation, bool) {
    let clamped = s.x.abs() > TRACK_LIMIT;
    let mut frame = Observation::blank();
    let col = cart_column(s.x);
    let mut plot = |(r, c): (i64, i64)| {
        if (0..FRAME_HEIGHT as i64).contains(&r) && (0..FRAME_WIDTH as i64).contains(&c) {
            frame.set(r as usize, c as usize, 1.0);
        }
    };
    cart_pixels(col).for_each(&mut plot);
    pole_pixels(col, s.theta).into_iter().for_each(&mut plot);
    (frame, clamped)
}

pub fn render(s: &SystemState) -> Observation {
    render_checked(s).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_center_frame() {
        let f = render(&SystemState::default());
        let cx = cart_column(0.0) as usize;
        assert_eq!(cx, 16);
        for r in 12..=23 {
            assert_eq!(f.get(r, cx), 1.0, "row {r}");
        }
        assert_eq!(f.get(11, cx), 0.0);
        let lit_in_column = (0..24).filter(|&r| f.get(r, cx) == 1.0).count();
        assert_eq!(lit_in_column, 12);
        assert_eq!(f.pixels.iter().sum::<f64>(), 24.0);
    }

    #[test]
    fn track_ends_map_to_edge_columns() {
        assert_eq!(cart_column(-2.4), 0);
        assert_eq!(cart_column(2.4), 31);
        assert_eq!(cart_column(99.0), 31);
        let (_, clamped) = render_checked(&SystemState::new(3.0, 0.0, 0.0, 0.0));
        assert!(clamped);
    }

    #[test]
    fn byte_round_trip_of_binary_frame_is_exact() {
        let f = render(&SystemState::new(0.3, 0.0, 0.2, 0.0));
        assert_eq!(Observation::from_bytes(&f.to_bytes()), f);
    }
}
