//! Breadth-first nearest-source fill used by the stub generators.

/// For every target pixel, the source pixel reached first by a 4-connected
/// breadth-first sweep over target pixels. Ties within one sweep step go to
/// the source with the smaller (row, column). Targets not connected to any
/// source get `None`; non-target pixels map to themselves when they are
/// sources.
pub fn nearest_sources(width: usize, height: usize, is_source: &[bool], is_target: &[bool], wrap_x: bool) -> Vec<Option<usize>> {
    let n = width * height;
    let mut assigned: Vec<Option<usize>> = (0..n).map(|i| is_source[i].then_some(i)).collect();
    let mut frontier: Vec<usize> = (0..n).filter(|&i| is_source[i]).collect();
    let mut proposals: Vec<Option<usize>> = vec![None; n];

    while !frontier.is_empty() {
        let mut touched = Vec::new();
        for &p in &frontier {
            let src = assigned[p].expect("frontier pixels are assigned");
            let (col, row) = (p % width, p / width);
            let mut visit = |q: usize| {
                if is_target[q] && assigned[q].is_none() {
                    match proposals[q] {
                        None => {
                            proposals[q] = Some(src);
                            touched.push(q);
                        }
                        Some(s) if src < s => proposals[q] = Some(src),
                        Some(_) => {}
                    }
                }
            };
            if row > 0 {
                visit(p - width);
            }
            if row + 1 < height {
                visit(p + width);
            }
            if col > 0 {
                visit(p - 1);
            } else if wrap_x && width > 1 {
                visit(p + width - 1);
            }
            if col + 1 < width {
                visit(p + 1);
            } else if wrap_x && width > 1 {
                visit(p + 1 - width);
            }
        }
        touched.sort_unstable();
        for &q in &touched {
            assigned[q] = proposals[q].take();
        }
        frontier = touched;
    }
    assigned
}
