use crate::image::Image;

/// Odd window side actually used for a requested `size`.
pub fn effective_median_size(size: usize) -> usize {
    let size = size.max(1);
    if size % 2 == 0 {
        size + 1
    } else {
        size
    }
}

/// Median over a `size x size` window with edge replication. Even sizes are
/// rounded up to the next odd size.
pub fn median_filter(img: &Image, size: usize) -> Image {
    let side = effective_median_size(size);
    if side != size {
        log::warn!("median size {size} is even; using {side}");
    }
    let r = (side / 2) as isize;
    let mut window = Vec::with_capacity(side * side);
    Image::from_fn(img.width(), img.height(), |row, col| {
        window.clear();
        for dr in -r..=r {
            for dc in -r..=r {
                window.push(img.get_replicated(row as isize + dr, col as isize + dc));
            }
        }
        // Odd cardinality, so the lower median is the median.
        let mid = (window.len() - 1) / 2;
        *window.select_nth_unstable_by(mid, f64::total_cmp).1
    })
}
