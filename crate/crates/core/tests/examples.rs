// Every example runs to completion.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                run_example().unwrap();
            }
        }
    };
}

example!(dataset_io);
example!(pca_reduce);
example!(weighted_ranking);
example!(feedback_session);
example!(group_memory);
example!(baseline_experiment);
example!(grouping_experiment);
example!(sampling_protocol);
example!(export_training_data);
