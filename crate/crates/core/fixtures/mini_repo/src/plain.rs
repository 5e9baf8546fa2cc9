// No verus regions in this file; nothing here becomes a function unit.

pub fn plain_helper(a: usize, b: usize) -> usize {
    a.saturating_add(b)
}

pub struct PlainRecord {
    pub id: usize,
}
