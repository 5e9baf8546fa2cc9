//! Recursive definitions with termination measures.

use vstd::prelude::*;

verus! {

pub open spec fn fact(n: nat) -> nat
    decreases n,
{
    if n == 0 { 1 } else { n * fact((n - 1) as nat) }
}

pub open spec fn fib_spec(n: nat) -> nat
    decreases n,
{
    if n <= 1 { n } else { fib_spec((n - 1) as nat) + fib_spec((n - 2) as nat) }
}

pub proof fn lemma_fact_pos(n: nat)
    ensures
        fact(n) >= 1,
    decreases n,
{
    if n > 0 {
        lemma_fact_pos((n - 1) as nat);
    }
    assert(fact(0) == 1);
}

pub proof fn lemma_fib_mono(n: nat)
    requires
        n >= 2,
    ensures
        fib_spec(n) >= fib_spec((n - 1) as nat),
    decreases n,
{
    lemma_fact_pos(n);
    assert(fib_spec(n) == fib_spec((n - 1) as nat) + fib_spec((n - 2) as nat));
}

} // verus!
