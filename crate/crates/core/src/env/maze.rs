use super::{
    build_tasks, check_action, EnvKind, Environment, FeatureVec, GridMap, Observation, PivotKey,
    StepOutcome, TaskSpec,
};
use crate::error::{check_width, Error, Result};

/// Positions are tracked in integer ticks of 0.1 world units; a cell is 10 ticks wide.
const TICKS_PER_CELL: i64 = 10;
const TICK: f64 = 0.1;
/// Displacement per control axis per step (0.2 world units).
const STEP_TICKS: i64 = 2;
/// Lattice used to bucket continuous observations into pivot keys.
pub const PIVOT_QUANTUM: f64 = 0.05;

pub const NUM_ACTIONS: usize = 9;

/// Wall map plus goal locations in world units.
#[derive(Clone, Debug)]
pub struct MazeLayout {
    map: GridMap,
    goals: Vec<(f64, f64)>,
}

impl MazeLayout {
    pub fn from_grid(map: GridMap) -> Result<Self> {
        if map.goals().is_empty() {
            return Err(Error::Config("maze layout needs at least one goal".into()));
        }
        let goals = map
            .goals()
            .iter()
            .map(|&(r, c)| (c as f64 + 0.5, r as f64 + 0.5))
            .collect();
        Ok(Self { map, goals })
    }

    pub fn goals(&self) -> &[(f64, f64)] {
        &self.goals
    }

    pub fn width(&self) -> f64 {
        self.map.width() as f64
    }

    pub fn height(&self) -> f64 {
        self.map.height() as f64
    }

    fn blocked(&self, x_ticks: i64, y_ticks: i64) -> bool {
        self.map
            .is_wall(y_ticks.div_euclid(TICKS_PER_CELL), x_ticks.div_euclid(TICKS_PER_CELL))
    }
}

/// Kinematic point mass in a walled maze; one task per goal with dense
/// proximity reward `exp(-‖x' - g‖)`.
#[derive(Clone, Debug)]
pub struct PointMaze {
    kind: EnvKind,
    layout: MazeLayout,
    tasks: Vec<TaskSpec>,
    horizon: usize,
    active_task: usize,
    pos: (i64, i64),
    t: usize,
    done: bool,
}

/// Control `(dx, dy) ∈ {-1, 0, 1}²` for an action index.
pub fn control(action: usize) -> (i64, i64) {
    ((action % 3) as i64 - 1, (action / 3) as i64 - 1)
}

impl PointMaze {
    pub fn new(
        kind: EnvKind,
        layout: MazeLayout,
        horizon: usize,
        tasks: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let m = layout.goals.len();
        if let Some(ts) = &tasks {
            for (i, w) in ts.iter().enumerate() {
                let ones = w.iter().filter(|&&v| v == 1.0).count();
                let zeros = w.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != w.len() {
                    return Err(Error::Config(format!(
                        "maze task {i} reward weights must be one-hot"
                    )));
                }
            }
        }
        let defaults = (0..m)
            .map(|j| (0..m).map(|k| if k == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let tasks = build_tasks(defaults, tasks, m, Some(&layout.goals))?;
        let start = Self::start_ticks(&layout);
        Ok(Self {
            kind,
            layout,
            tasks,
            horizon,
            active_task: 0,
            pos: start,
            t: 0,
            done: false,
        })
    }

    fn start_ticks(layout: &MazeLayout) -> (i64, i64) {
        let (r, c) = layout.map.start();
        (
            c as i64 * TICKS_PER_CELL + TICKS_PER_CELL / 2,
            r as i64 * TICKS_PER_CELL + TICKS_PER_CELL / 2,
        )
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    /// Agent position in world units.
    pub fn position(&self) -> (f64, f64) {
        (self.pos.0 as f64 * TICK, self.pos.1 as f64 * TICK)
    }

    pub fn start_position(&self) -> (f64, f64) {
        let s = Self::start_ticks(&self.layout);
        (s.0 as f64 * TICK, s.1 as f64 * TICK)
    }

    /// Moves the agent directly; for tests and scripted probes.
    pub fn place_at_cell_center(&mut self, row: usize, col: usize) {
        self.pos = (
            col as i64 * TICKS_PER_CELL + TICKS_PER_CELL / 2,
            row as i64 * TICKS_PER_CELL + TICKS_PER_CELL / 2,
        );
    }

    fn goal_of_active(&self) -> (f64, f64) {
        self.tasks[self.active_task]
            .goal_position
            .unwrap_or((0.0, 0.0))
    }

    fn proximity_features(&self, x: f64, y: f64) -> FeatureVec {
        FeatureVec(
            self.layout
                .goals
                .iter()
                .map(|&(gx, gy)| (-((x - gx).powi(2) + (y - gy).powi(2)).sqrt()).exp())
                .collect(),
        )
    }
}

impl Environment for PointMaze {
    fn kind(&self) -> EnvKind {
        self.kind
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn feature_dim(&self) -> usize {
        self.layout.goals.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn set_task(&mut self, task_id: usize) -> Result<()> {
        if task_id >= self.tasks.len() {
            return Err(Error::Usage(format!("no task {task_id}")));
        }
        self.active_task = task_id;
        Ok(())
    }

    fn active_task(&self) -> usize {
        self.active_task
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.pos = Self::start_ticks(&self.layout);
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn observe(&self) -> Observation {
        let (x, y) = self.position();
        let (gx, gy) = self.goal_of_active();
        Observation(vec![x, y, gx, gy])
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(action, NUM_ACTIONS)?;
        if self.done {
            return Err(Error::Usage("episode has ended; reset first".into()));
        }
        let s = self.observe();
        let (dx, dy) = control(action);
        // Per-axis collision: a blocked axis keeps its coordinate.
        let nx = self.pos.0 + dx * STEP_TICKS;
        if !self.layout.blocked(nx, self.pos.1) {
            self.pos.0 = nx;
        }
        let ny = self.pos.1 + dy * STEP_TICKS;
        if !self.layout.blocked(self.pos.0, ny) {
            self.pos.1 = ny;
        }
        let obs = self.observe();
        let features = self.feature_of(&s, action, &obs)?;
        self.t += 1;
        let truncated = self.t >= self.horizon;
        self.done = truncated;
        Ok(StepOutcome {
            obs,
            features,
            terminal: false,
            truncated,
        })
    }

    fn feature_of(&self, s: &Observation, a: usize, s_next: &Observation) -> Result<FeatureVec> {
        check_action(a, NUM_ACTIONS)?;
        check_width("maze observation", 4, s.len())?;
        check_width("maze observation", 4, s_next.len())?;
        Ok(self.proximity_features(s_next.0[0], s_next.0[1]))
    }

    fn pivot_key(&self, s: &Observation, a: usize) -> PivotKey {
        let mut bytes = Vec::with_capacity(8 * s.len() + 4);
        for v in s.as_slice() {
            let q = (v / PIVOT_QUANTUM).round() as i64;
            bytes.extend_from_slice(&q.to_le_bytes());
        }
        bytes.extend_from_slice(&(a as u32).to_le_bytes());
        PivotKey(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::task_reward;

    fn umaze() -> PointMaze {
        let map = GridMap::parse(include_str!("../../layouts/maze_u.txt")).unwrap();
        PointMaze::new(EnvKind::PointMazeU, MazeLayout::from_grid(map).unwrap(), 200, None).unwrap()
    }

    #[test]
    fn eight_goals_eight_features() {
        let m = umaze();
        assert_eq!(m.feature_dim(), 8);
        assert_eq!(m.tasks().len(), 8);
        assert_eq!(m.kind(), EnvKind::PointMazeU);
        for t in m.tasks() {
            assert_eq!(t.reward_weights.iter().filter(|&&w| w == 1.0).count(), 1);
        }
    }

    #[test]
    fn reset_to_start_and_zero_control() {
        let mut m = umaze();
        let obs = m.reset(3);
        assert_eq!((obs.0[0], obs.0[1]), m.start_position());
        assert_eq!((obs.0[0], obs.0[1]), (0.5, 0.5));
        let out = m.step(4).unwrap();
        assert_eq!(out.obs, obs);
        assert!(!out.terminal);
    }

    #[test]
    fn walls_and_bounds_clip() {
        let mut m = umaze();
        m.reset(0);
        // Up-left from the corner start: both axes blocked by the boundary.
        for _ in 0..5 {
            m.step(0).unwrap();
        }
        assert_eq!(m.position(), (0.1, 0.1));
        // Row 2 columns 0..3 are walls: moving down from (0, 0) stops inside row 1.
        m.reset(0);
        for _ in 0..20 {
            m.step(7).unwrap();
        }
        let (x, y) = m.position();
        assert_eq!(x, 0.5);
        assert!((y - 1.9).abs() < 1e-12, "y = {y}");
    }

    #[test]
    fn reward_at_goal_is_one() {
        let mut m = umaze();
        m.reset(0);
        let (r, c) = (0, 2);
        m.place_at_cell_center(r, c);
        let s = m.observe();
        let out = m.step(4).unwrap();
        let phi = m.feature_of(&s, 4, &out.obs).unwrap();
        assert_eq!(phi.0[0], 1.0);
        assert_eq!(task_reward(&m.tasks()[0], &phi).unwrap(), 1.0);
        assert!(phi.0.iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn equidistant_goals_have_equal_features() {
        let m = umaze();
        // Goals 0 and 1 sit at (2.5, 0.5) and (4.5, 0.5).
        let phi = m.proximity_features(3.5, 0.5);
        assert_eq!(phi.0[0], phi.0[1]);
    }

    #[test]
    fn never_terminal_before_horizon() {
        let mut m = umaze();
        m.reset(0);
        for t in 1..=200 {
            let out = m.step(t % 9).unwrap();
            assert!(!out.terminal);
            assert_eq!(out.truncated, t == 200);
        }
    }

    #[test]
    fn pivot_key_quantizes() {
        let m = umaze();
        let a = m.pivot_key(&Observation(vec![1.0, 2.0, 3.0, 4.0]), 2);
        let b = m.pivot_key(&Observation(vec![1.01, 2.0, 3.0, 4.0]), 2);
        let c = m.pivot_key(&Observation(vec![1.04, 2.0, 3.0, 4.0]), 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, m.pivot_key(&Observation(vec![1.0, 2.0, 3.0, 4.0]), 3));
    }

    #[test]
    fn non_one_hot_tasks_rejected() {
        let map = GridMap::parse(include_str!("../../layouts/maze_u.txt")).unwrap();
        let layout = MazeLayout::from_grid(map).unwrap();
        let bad = vec![vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        assert!(matches!(PointMaze::new(EnvKind::PointMazeU, layout, 200, Some(bad)), Err(Error::Config(_))));
    }
}
