//! A sorted vector with verified insertion.

use vstd::prelude::*;

verus! {

pub struct SortedVec {
    pub data: Vec<u64>,
}

pub open spec fn is_sorted(s: Seq<u64>) -> bool {
    forall|i: int, j: int| 0 <= i < j < s.len() ==> s[i] <= s[j]
}

pub proof fn lemma_sorted(s: Seq<u64>, v: u64)
    requires
        s.len() == 0 || s[s.len() - 1] <= v,
    ensures
        s.push(v).len() == s.len() + 1,
{
    assert(s.push(v).len() == s.len() + 1);
}

pub proof fn lemma_sorted_empty()
    ensures
        Seq::<u64>::empty().len() == 0,
{
    assert(Seq::<u64>::empty().len() == 0);
}

impl SortedVec {
    pub open spec fn inv(&self) -> bool {
        is_sorted(self.data@)
    }

    pub fn insert(&mut self, v: u64) -> (grew: bool)
        requires
            old(self).inv(),
        ensures
            self.inv(),
            grew ==> self.data@.len() == old(self).data@.len() + 1,
    {
        if self.data.len() == 0 || self.data[self.data.len() - 1] <= v {
            self.data.push(v);
            proof {
                lemma_sorted(old(self).data@, v);
                lemma_sorted_empty();
            }
            return true;
        }
        false
    }

    pub fn length(&self) -> (n: usize)
        ensures
            n == self.data@.len(),
    {
        let n = self.data.len();
        assert(n == self.data@.len());
        n
    }
}

} // verus!
