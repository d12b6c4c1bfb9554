use crate::error::{Error, Result};

/// Plain-text grid: `#` wall, `.` free, `S` start, digits mark goal indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    height: usize,
    width: usize,
    walls: Vec<bool>,
    start: (usize, usize),
    goals: Vec<(usize, usize)>,
}

impl GridMap {
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Config("layout grid is empty".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goals: Vec<Option<(usize, usize)>> = vec![None; 10];
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Config(format!(
                    "layout row {r} has {} cells, expected {width}",
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        if start.replace((r, c)).is_some() {
                            return Err(Error::Config("layout has more than one start".into()));
                        }
                        walls.push(false);
                    }
                    d if d.is_ascii_digit() => {
                        let idx = d.to_digit(10).unwrap() as usize;
                        if goals[idx].replace((r, c)).is_some() {
                            return Err(Error::Config(format!("goal {idx} appears twice")));
                        }
                        walls.push(false);
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "unknown layout character {other:?} at row {r}, column {c}"
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::Config("layout has no start cell".into()))?;
        let n_goals = goals.iter().take_while(|g| g.is_some()).count();
        if goals[n_goals..].iter().any(Option::is_some) {
            return Err(Error::Config("goal indices must be contiguous from 0".into()));
        }
        let goals = goals.into_iter().flatten().collect();
        Ok(Self {
            height,
            width,
            walls,
            start,
            goals,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    /// Goal cells as `(row, col)`, indexed by their digit.
    pub fn goals(&self) -> &[(usize, usize)] {
        &self.goals
    }

    /// Cells outside the grid count as walls.
    pub fn is_wall(&self, row: i64, col: i64) -> bool {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            return true;
        }
        self.walls[row as usize * self.width + col as usize]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| !self.walls[r * self.width + c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cells() {
        let g = GridMap::parse("#####\n#S.0#\n#.#1#\n#####\n").unwrap();
        assert_eq!((g.height(), g.width()), (4, 5));
        assert_eq!(g.start(), (1, 1));
        assert_eq!(g.goals(), &[(1, 3), (2, 3)]);
        assert!(g.is_wall(2, 2));
        assert!(!g.is_wall(2, 1));
        assert!(g.is_wall(-1, 0));
        assert!(g.is_wall(0, 5));
        assert_eq!(g.free_cells().count(), 5);
    }

    #[test]
    fn malformed_grids_rejected() {
        for bad in [
            "",
            "S..\n..",
            "...\n...",
            "S.S",
            "S0.0",
            "S.1",
            "S.x",
        ] {
            assert!(matches!(GridMap::parse(bad), Err(Error::Config(_))), "{bad:?}");
        }
    }
}
