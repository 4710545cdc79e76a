use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vertex {
    One,
    Two,
}

impl Vertex {
    pub fn other(self) -> Vertex {
        match self {
            Vertex::One => Vertex::Two,
            Vertex::Two => Vertex::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Vertex::One => 0,
            Vertex::Two => 1,
        }
    }

    /// The directed edge leaving this vertex.
    pub fn edge(self) -> Edge {
        Edge {
            from: self,
            to: self.other(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: Vertex,
    pub to: Vertex,
}

impl Edge {
    pub fn reversed(self) -> Edge {
        Edge {
            from: self.to,
            to: self.from,
        }
    }
}

/// The bidirectional two-vertex graph `V = {1, 2}`, `E = {(1,2), (2,1)}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CouplingGraph;

impl CouplingGraph {
    pub fn vertices(self) -> [Vertex; 2] {
        [Vertex::One, Vertex::Two]
    }

    pub fn edges(self) -> [Edge; 2] {
        [Vertex::One.edge(), Vertex::Two.edge()]
    }
}

/// One value per vertex, indexable by [`Vertex`].
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PerVertex<T>(pub [T; 2]);

impl<T> PerVertex<T> {
    pub fn new(one: T, two: T) -> Self {
        PerVertex([one, two])
    }

    pub fn map<U>(&self, mut f: impl FnMut(Vertex, &T) -> U) -> PerVertex<U> {
        PerVertex([f(Vertex::One, &self.0[0]), f(Vertex::Two, &self.0[1])])
    }
}

impl<T> Index<Vertex> for PerVertex<T> {
    type Output = T;
    fn index(&self, v: Vertex) -> &T {
        &self.0[v.index()]
    }
}

impl<T> IndexMut<Vertex> for PerVertex<T> {
    fn index_mut(&mut self, v: Vertex) -> &mut T {
        &mut self.0[v.index()]
    }
}
