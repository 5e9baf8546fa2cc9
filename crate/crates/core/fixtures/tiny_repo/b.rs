verus! {

pub open spec fn tiny_flag(x: bool) -> bool {
    !x
}

} // verus!
