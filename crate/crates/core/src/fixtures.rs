//! Small hand-built matrices used in tests and documentation.

use crate::data::RatingMatrix;
use crate::grouping::Partition;

/// Five users by six items on a 1-5 scale.
///
/// Users 0 and 1 share three of five rated items with squared rating
/// differences summing to 1, so their edge weight is `3/5 * 1/2 = 0.30`;
/// users 0 and 2 share three of four, also at distance 1, giving `0.375`.
pub fn similarity_example() -> RatingMatrix {
    RatingMatrix::from_dense(
        &[
            [5u8, 3, 3, 0, 4, 0],
            [5, 3, 2, 1, 0, 0],
            [5, 0, 3, 0, 3, 0],
            [0, 0, 0, 4, 0, 5],
            [1, 0, 0, 5, 0, 4],
        ],
        5,
    )
    .expect("valid fixture")
}

/// Seven users by six items, split into groups `{0,1,2,3}` and `{4,5,6}`.
///
/// At a 75% candidacy threshold the first group's candidate items are
/// `{0, 2, 3, 4}` and the second group's are `{3, 4}`.
pub fn group_split_example() -> (RatingMatrix, Partition) {
    let y = RatingMatrix::from_dense(
        &[
            [4u8, 2, 5, 3, 4, 0],
            [5, 0, 4, 4, 3, 1],
            [3, 0, 0, 5, 4, 0],
            [4, 1, 3, 0, 5, 0],
            [2, 3, 0, 4, 5, 0],
            [0, 4, 0, 3, 4, 2],
            [1, 0, 2, 5, 3, 3],
        ],
        5,
    )
    .expect("valid fixture");
    let groups = Partition::from_assignment(vec![0, 0, 0, 0, 1, 1, 1], 2).expect("valid partition");
    (y, groups)
}
