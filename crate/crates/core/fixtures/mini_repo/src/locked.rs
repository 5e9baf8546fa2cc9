//! Registry guarded by a lock flag.

use vstd::prelude::*;

verus! {

pub struct Registry {
    pub locked: bool,
    pub elems: Vec<u64>,
}

impl Registry {
    /// Whether the registry is locked; a locked registry rejects writes.
    pub open spec fn is_locked(&self) -> bool {
        self.locked
    }

    pub open spec fn cap_ok(&self) -> bool {
        self.elems@.len() <= 64
    }

    pub proof fn lemma_below_cap(&self)
        requires
            self.cap_ok(),
        ensures
            self.elems@.len() < 65,
    {
        assert(self.elems@.len() <= 64);
    }

    pub fn add_element(&mut self, v: u64) -> (ok: bool)
        requires
            !old(self).is_locked(),
            old(self).cap_ok(),
        ensures
            self.cap_ok(),
    {
        if self.elems.len() < 64 {
            self.elems.push(v);
            proof {
                self.lemma_below_cap();
            }
            return true;
        }
        false
    }

    pub fn clear_elems(&mut self)
        requires
            !old(self).is_locked(),
        ensures
            self.elems@.len() == 0,
    {
        self.elems = Vec::new();
        assert(self.elems@.len() == 0);
    }

    pub fn read_flag(&self) -> bool {
        self.locked
    }
}

} // verus!
