use std::collections::BTreeMap;

/// Gradient restricted to the user and item rows a loss touched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RowGrads {
    dim: usize,
    users: BTreeMap<usize, Vec<f64>>,
    items: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        RowGrads {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_mut(&mut self, user: usize) -> &mut [f64] {
        let dim = self.dim;
        self.users.entry(user).or_insert_with(|| vec![0.0; dim])
    }

    pub fn item_mut(&mut self, item: usize) -> &mut [f64] {
        let dim = self.dim;
        self.items.entry(item).or_insert_with(|| vec![0.0; dim])
    }

    pub fn add_user(&mut self, user: usize, alpha: f64, g: &[f64]) {
        axpy(self.user_mut(user), alpha, g);
    }

    pub fn add_item(&mut self, item: usize, alpha: f64, g: &[f64]) {
        axpy(self.item_mut(item), alpha, g);
    }

    /// `self += alpha * other`
    pub fn accumulate(&mut self, alpha: f64, other: &RowGrads) {
        for (&u, g) in &other.users {
            self.add_user(u, alpha, g);
        }
        for (&i, g) in &other.items {
            self.add_item(i, alpha, g);
        }
    }

    pub fn users(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.users.iter().map(|(&u, g)| (u, g.as_slice()))
    }

    pub fn items(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.items.iter().map(|(&i, g)| (i, g.as_slice()))
    }

    pub fn user(&self, user: usize) -> Option<&[f64]> {
        self.users.get(&user).map(Vec::as_slice)
    }

    pub fn item(&self, item: usize) -> Option<&[f64]> {
        self.items.get(&item).map(Vec::as_slice)
    }

    pub fn is_finite(&self) -> bool {
        self.users
            .values()
            .chain(self.items.values())
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.users
            .values()
            .chain(self.items.values())
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}
