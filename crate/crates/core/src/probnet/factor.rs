//! Dense discrete factors over sorted variable scopes.

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    /// Variable ids, strictly increasing.
    pub vars: Vec<usize>,
    pub card: Vec<usize>,
    /// Row-major: the last variable varies fastest.
    pub values: Vec<f64>,
}

fn strides(card: &[usize]) -> Vec<usize> {
    let mut s = vec![1; card.len()];
    for i in (0..card.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * card[i + 1];
    }
    s
}

impl Factor {
    pub fn new(vars: Vec<usize>, card: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(card.iter().product::<usize>(), values.len());
        Self { vars, card, values }
    }

    pub fn scalar(v: f64) -> Self {
        Self { vars: Vec::new(), card: Vec::new(), values: vec![v] }
    }

    pub fn contains(&self, var: usize) -> bool {
        self.vars.binary_search(&var).is_ok()
    }

    fn decode(index: usize, card: &[usize], out: &mut [usize]) {
        let mut rem = index;
        for i in (0..card.len()).rev() {
            out[i] = rem % card[i];
            rem /= card[i];
        }
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.iter().chain(&other.vars).copied().collect();
        vars.sort_unstable();
        vars.dedup();
        let card: Vec<usize> = vars
            .iter()
            .map(|v| {
                self.vars
                    .iter()
                    .position(|x| x == v)
                    .map(|p| self.card[p])
                    .unwrap_or_else(|| other.card[other.vars.iter().position(|x| x == v).unwrap()])
            })
            .collect();
        let map_a: Vec<Option<usize>> =
            vars.iter().map(|v| self.vars.iter().position(|x| x == v)).collect();
        let map_b: Vec<Option<usize>> =
            vars.iter().map(|v| other.vars.iter().position(|x| x == v)).collect();
        let sa = strides(&self.card);
        let sb = strides(&other.card);
        let size: usize = card.iter().product();
        let mut assignment = vec![0; vars.len()];
        let mut values = Vec::with_capacity(size);
        for idx in 0..size {
            Self::decode(idx, &card, &mut assignment);
            let mut ia = 0;
            let mut ib = 0;
            for (k, &a) in assignment.iter().enumerate() {
                if let Some(p) = map_a[k] {
                    ia += a * sa[p];
                }
                if let Some(p) = map_b[k] {
                    ib += a * sb[p];
                }
            }
            values.push(self.values[ia] * other.values[ib]);
        }
        Factor { vars, card, values }
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        vars.remove(pos);
        let mut card = self.card.clone();
        card.remove(pos);
        let size: usize = card.iter().product();
        let mut values = vec![0.0; size];
        let so = strides(&card);
        let mut assignment = vec![0; self.vars.len()];
        for (idx, v) in self.values.iter().enumerate() {
            Self::decode(idx, &self.card, &mut assignment);
            let mut out = 0;
            let mut k = 0;
            for (i, &a) in assignment.iter().enumerate() {
                if i == pos {
                    continue;
                }
                out += a * so[k];
                k += 1;
            }
            values[out] += v;
        }
        Factor { vars, card, values }
    }

    /// Fixes `var = value` and drops it from the scope.
    pub fn reduce(&self, var: usize, value: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        vars.remove(pos);
        let mut card = self.card.clone();
        card.remove(pos);
        let mut assignment = vec![0; self.vars.len()];
        let values = self
            .values
            .iter()
            .enumerate()
            .filter_map(|(idx, v)| {
                Self::decode(idx, &self.card, &mut assignment);
                (assignment[pos] == value).then_some(*v)
            })
            .collect();
        Factor { vars, card, values }
    }
}
