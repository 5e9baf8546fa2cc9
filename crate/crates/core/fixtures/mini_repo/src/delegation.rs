use vstd::prelude::*;

verus! {

pub struct DelegationMap<K> {
    pub lows: KeyMap<K>,
}

impl<K: KeyTrait + Clone> DelegationMap<K> {
    pub open spec fn valid(&self) -> bool {
        self.lows.well_formed()
    }

    // Returns the greatest_lower_bound as evidence for the proof of correctness for the set data structure
    fn get(&self, k: &K) -> (res: (ID, Ghost<KeyIterator<K>>))
        requires
            self.valid(),
        ensures ({
            let (id, glb) = res;
            &&& id@ == self@[*k]
            &&& self.lows.greatest_lower_bound_spec(KeyIterator::new_spec(*k), glb@)
            &&& id@.valid_physical_address()
        }),
    {
        let ki = KeyIterator::new(k.clone());
        let glb = self.lows.greatest_lower_bound(&ki);
        proof {
            let glb_k = *glb.get();
            assert(self.lows@.contains_key(glb_k)); // OBSERVE
            let hi = choose|hi| self.lows.gap(glb, hi) && #[trigger] KeyIterator::between(glb, ki, hi);
            assert(KeyIterator::between(KeyIterator::new_spec(glb_k), ki, hi));
            assert(self.lows@.contains_key(glb_k)
                && self.lows.gap(KeyIterator::new_spec(glb_k), hi)
                && KeyIterator::between(KeyIterator::new_spec(glb_k), KeyIterator::new_spec(*k), hi));
        }
        let id = (*self.lows.get(glb.get()).unwrap()).clone_up_to_view();
        (id, Ghost(glb))
    }
}

} // verus!
