//! Greyscale conversion and pairwise pixel aggregations.

use super::{AggregateInput, Aggregation, DataError, Grid};

/// BT.601 luma: round(0.299 R + 0.587 G + 0.114 B) per pixel.
pub fn to_greyscale(grid: &Grid) -> Result<Grid, DataError> {
    if grid.channels() != 3 {
        return Err(DataError::NotColor(grid.channels()));
    }
    let data = grid
        .data()
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            y.round() as u8
        })
        .collect();
    Grid::new(grid.width(), grid.height(), 1, data)
}

/// Combines two grids for joint compression. Pixel aggregations need equal
/// shapes; `Concat` keeps both grids in order.
pub fn aggregate(x: &Grid, y: &Grid, how: Aggregation) -> Result<AggregateInput, DataError> {
    match how {
        Aggregation::Concat => Ok(AggregateInput::OrderedPair(x.clone(), y.clone())),
        Aggregation::GsAvg => {
            let gx = to_greyscale(x)?;
            let gy = to_greyscale(y)?;
            elementwise(&gx, &gy, |a, b| ((a as u16 + b as u16) / 2) as u8)
        }
        Aggregation::Avg => elementwise(x, y, |a, b| ((a as u16 + b as u16) / 2) as u8),
        Aggregation::Min => elementwise(x, y, |a, b| a.min(b)),
        Aggregation::Max => elementwise(x, y, |a, b| a.max(b)),
    }
}

fn elementwise(x: &Grid, y: &Grid, f: impl Fn(u8, u8) -> u8) -> Result<AggregateInput, DataError> {
    if !x.same_shape(y) {
        return Err(DataError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            x.width(),
            x.height(),
            x.channels(),
            y.width(),
            y.height(),
            y.channels()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| f(a, b))
        .collect();
    Ok(AggregateInput::Single(Grid::new(x.width(), x.height(), x.channels(), data)?))
}
