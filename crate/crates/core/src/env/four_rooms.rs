use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    build_tasks, check_action, EnvKind, Environment, FeatureVec, GridMap, Observation, PivotKey,
    StepOutcome, TaskSpec,
};
use crate::error::{check_width, Error, Result};

pub const OBJECT_TYPES: usize = 3;
pub const INSTANCES_PER_TYPE: usize = 4;

/// Up, right, down, left as `(drow, dcol)`.
const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// Object collection gridworld with a terminal goal.
///
/// Features are `k` object-type bits followed by a goal bit. An object only
/// produces its bit the first time it is picked up; the inventory in the
/// observation remembers which instances are gone.
#[derive(Clone, Debug)]
pub struct FourRooms {
    map: GridMap,
    goal: (usize, usize),
    /// `(cell, object type)` per instance; instance index = inventory bit.
    objects: Vec<((usize, usize), usize)>,
    tasks: Vec<TaskSpec>,
    horizon: usize,
    active_task: usize,
    pos: (usize, usize),
    inventory: Vec<bool>,
    t: usize,
    done: bool,
}

/// Built-in task weights: object weights in {-1, 0, 1}, goal weight +1.
pub fn default_task_weights() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 1.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![1.0, -1.0, 1.0, 1.0],
        vec![-1.0, 1.0, 1.0, 1.0],
        vec![1.0, 1.0, -1.0, 1.0],
    ]
}

impl FourRooms {
    pub fn new(
        map: GridMap,
        layout_seed: u64,
        horizon: usize,
        tasks: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let goal = *map
            .goals()
            .first()
            .ok_or_else(|| Error::Config("gridworld layout needs goal 0".into()))?;
        if map.goals().len() > 1 {
            return Err(Error::Config("gridworld layout must have exactly one goal".into()));
        }
        let mut cells: Vec<_> = map
            .free_cells()
            .filter(|&c| c != map.start() && c != goal)
            .collect();
        let n_objects = OBJECT_TYPES * INSTANCES_PER_TYPE;
        if cells.len() < n_objects {
            return Err(Error::Config(format!(
                "layout has {} free cells, {n_objects} objects need placing",
                cells.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(layout_seed);
        cells.shuffle(&mut rng);
        let objects = cells[..n_objects]
            .iter()
            .enumerate()
            .map(|(i, &cell)| (cell, i / INSTANCES_PER_TYPE))
            .collect();
        let tasks = build_tasks(default_task_weights(), tasks, OBJECT_TYPES + 1, None)?;
        let start = map.start();
        Ok(Self {
            map,
            goal,
            objects,
            tasks,
            horizon,
            active_task: 0,
            pos: start,
            inventory: vec![false; n_objects],
            t: 0,
            done: false,
        })
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn objects(&self) -> &[((usize, usize), usize)] {
        &self.objects
    }

    fn encode(&self, pos: (usize, usize), inventory: &[bool]) -> Observation {
        let (w, h) = (self.map.width(), self.map.height());
        let mut v = vec![0.0; w + h + inventory.len()];
        v[pos.1] = 1.0;
        v[w + pos.0] = 1.0;
        for (i, &held) in inventory.iter().enumerate() {
            if held {
                v[w + h + i] = 1.0;
            }
        }
        Observation(v)
    }

    /// Recovers `(row, col)` and the inventory from an observation.
    fn decode(&self, obs: &Observation) -> Result<((usize, usize), Vec<bool>)> {
        check_width("gridworld observation", self.obs_dim(), obs.len())?;
        let (w, h) = (self.map.width(), self.map.height());
        let v = obs.as_slice();
        let col = v[..w].iter().position(|&x| x == 1.0);
        let row = v[w..w + h].iter().position(|&x| x == 1.0);
        match (row, col) {
            (Some(r), Some(c)) => Ok(((r, c), v[w + h..].iter().map(|&x| x == 1.0).collect())),
            _ => Err(Error::Input("gridworld observation has no position".into())),
        }
    }
}

impl Environment for FourRooms {
    fn kind(&self) -> EnvKind {
        EnvKind::FourRooms
    }

    fn num_actions(&self) -> usize {
        MOVES.len()
    }

    fn obs_dim(&self) -> usize {
        self.map.width() + self.map.height() + self.objects.len()
    }

    fn feature_dim(&self) -> usize {
        OBJECT_TYPES + 1
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
        self.pos = self.map.start();
        self.inventory.iter_mut().for_each(|b| *b = false);
        self.t = 0;
        self.done = false;
        self.observe()
    }

    fn observe(&self) -> Observation {
        self.encode(self.pos, &self.inventory)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        check_action(action, MOVES.len())?;
        if self.done {
            return Err(Error::Usage("episode has ended; reset first".into()));
        }
        let s = self.observe();
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (self.pos.0 as i64 + dr, self.pos.1 as i64 + dc);
        if !self.map.is_wall(nr, nc) {
            self.pos = (nr as usize, nc as usize);
        }
        for (i, (cell, _)) in self.objects.iter().enumerate() {
            if *cell == self.pos {
                self.inventory[i] = true;
            }
        }
        let obs = self.observe();
        let features = self.feature_of(&s, action, &obs)?;
        let terminal = self.pos == self.goal;
        self.t += 1;
        let truncated = !terminal && self.t >= self.horizon;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            obs,
            features,
            terminal,
            truncated,
        })
    }

    fn feature_of(&self, s: &Observation, a: usize, s_next: &Observation) -> Result<FeatureVec> {
        check_action(a, MOVES.len())?;
        let (_, inv_before) = self.decode(s)?;
        let (pos, inv_after) = self.decode(s_next)?;
        let mut phi = vec![0.0; OBJECT_TYPES + 1];
        for (i, (&before, &after)) in inv_before.iter().zip(&inv_after).enumerate() {
            if after && !before {
                phi[self.objects[i].1] = 1.0;
            }
        }
        if pos == self.goal {
            phi[OBJECT_TYPES] = 1.0;
        }
        Ok(FeatureVec(phi))
    }

    fn pivot_key(&self, s: &Observation, a: usize) -> PivotKey {
        let mut bytes = Vec::with_capacity(8 * s.len() + 4);
        for v in s.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&(a as u32).to_le_bytes());
        PivotKey(bytes)
    }
}
