use capsfake::features::Label;
use capsfake::trainer::MetricsReport;

fn main() {
    // a confusion matrix with fake as the positive class
    let m = MetricsReport::from_counts(1488, 12, 3, 1497);
    println!("{m}\n");
    println!("{}\n{}", MetricsReport::CSV_HEADER, m.csv_row());

    let pairs = [
        (Label::Fake, Label::Fake),
        (Label::Fake, Label::Real),
        (Label::Real, Label::Real),
        (Label::Real, Label::Fake),
        (Label::Fake, Label::Fake),
    ];
    println!("\n{}", MetricsReport::from_pairs(pairs));
}
